//! C99 emitter.
//!
//! The array layout matches the executor: slot-major, then row-major over the
//! padded spatial extents. The generated `main` seeds the grid with the same
//! generator and writes the final `δ_t` interior levels to stdout as raw
//! native-endian floats, oldest first, so its output can be compared with
//! [`Grid::final_levels_bytes`](crate::executor::Grid::final_levels_bytes)
//! on little-endian hosts.
//!
//! Compile with `-ffp-contract=off` so the accumulation is not fused.

use std::fmt::Write as _;

use thiserror::Error;

use crate::executor::{AddressMap, Lcg};
use crate::ir::{Access, AffineExpr, Bound, BoundKind, IrError, Loop, Schedule};
use crate::model::{IterationSpace, StencilSpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodegenError {
    #[error(transparent)]
    Ir(#[from] IrError),
}

fn expr(e: &AffineExpr) -> String {
    e.to_string()
}

fn bound(b: &Bound) -> String {
    let macro_name = match b.kind {
        BoundKind::Single => return expr(&b.exprs[0]),
        BoundKind::MaxOf => "MAX",
        BoundKind::MinOf => "MIN",
    };
    let mut parts = b.exprs.iter().rev().map(expr);
    let last = parts.next().unwrap_or_default();
    parts.fold(last, |acc, e| format!("{macro_name}({e}, {acc})"))
}

fn access(a: &Access) -> String {
    let mut s = format!("A[IDX({}", expr(&a.time));
    for e in &a.space {
        let _ = write!(s, ", {}", expr(e));
    }
    s.push_str(")]");
    s
}

fn coeff_literal(c: f32) -> String {
    // Shortest round-trip decimal; C reads it back to the same float.
    let mut s = format!("{c:?}");
    if !s.contains(['.', 'e', 'i', 'N']) {
        s.push_str(".0");
    }
    s.push('f');
    s
}

struct Emitter {
    out: String,
    depth: usize,
}

impl Emitter {
    fn line(&mut self, text: &str) {
        for _ in 0..self.depth {
            self.out.push_str("    ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn open_loop(&mut self, l: &Loop) {
        if l.parallel {
            self.line("#pragma omp parallel for");
        }
        let v = &l.var;
        let step = if l.step == 1 {
            format!("{v}++")
        } else {
            format!("{v} += {}", l.step)
        };
        self.line(&format!(
            "for (long {v} = {}; {v} < {}; {step}) {{",
            bound(&l.lower),
            bound(&l.upper)
        ));
        self.depth += 1;
    }

    fn close(&mut self) {
        self.depth -= 1;
        self.line("}");
    }
}

/// Renders `schedule` as a self-contained C program.
pub fn emit_c(
    schedule: &Schedule,
    spec: &StencilSpec,
    space: &IterationSpace,
) -> Result<String, CodegenError> {
    schedule.validate(spec)?;
    let map = AddressMap::new(spec, space);
    let n = spec.ndims();
    let slots = schedule.required_slots(spec);
    let mut e = Emitter {
        out: String::new(),
        depth: 0,
    };

    e.line(&format!("/* {} */", spec.name()));
    for h in ["stdint.h", "stdio.h", "stdlib.h"] {
        e.line(&format!("#include <{h}>"));
    }
    e.line("");
    e.line("#define MAX(a, b) ((a) > (b) ? (a) : (b))");
    e.line("#define MIN(a, b) ((a) < (b) ? (a) : (b))");
    e.line("");
    e.line(&format!("#define STEPS {}", space.time_steps()));
    e.line(&format!("#define DEPTH {}", spec.time_depth()));
    e.line(&format!("#define SLOTS {slots}"));
    e.line(&format!("#define SLAB {}", map.slab));
    for i in 0..n {
        e.line(&format!("#define D{i} {}", space.extents()[i]));
        e.line(&format!("#define H{i} {}", map.halo[i]));
        e.line(&format!("#define P{i} {}", map.padded[i]));
        e.line(&format!("#define S{i} {}", map.strides[i]));
    }
    let params: Vec<String> = (0..n).map(|i| format!("i{i}")).collect();
    let offsets: Vec<String> = (0..n).map(|i| format!("((i{i}) + H{i}) * S{i}")).collect();
    e.line(&format!(
        "#define IDX(l, {}) ((((l) % SLOTS + SLOTS) % SLOTS) * SLAB + {})",
        params.join(", "),
        offsets.join(" + ")
    ));
    e.line("");

    e.line("void kernel(float* restrict A)");
    e.line("{");
    e.depth += 1;
    let fused = schedule.nests.len() > 1;
    if fused {
        e.open_loop(&schedule.nests[0].loops[0]);
    }
    for nest in &schedule.nests {
        let loops = if fused {
            &nest.loops[1..]
        } else {
            &nest.loops[..]
        };
        for l in loops {
            e.open_loop(l);
        }
        let body = &nest.body;
        for (k, (read, term)) in body.reads.iter().zip(spec.terms()).enumerate() {
            let product = format!("{} * {}", coeff_literal(term.coeff), access(read));
            if k == 0 {
                e.line(&format!("float acc = {product};"));
            } else {
                e.line(&format!("acc = acc + {product};"));
            }
        }
        e.line(&format!("{} = acc;", access(&body.target)));
        for _ in loops {
            e.close();
        }
    }
    if fused {
        e.close();
    }
    e.depth -= 1;
    e.line("}");
    e.line("");

    e.line("static uint64_t lcg_state;");
    e.line("");
    e.line("static float lcg_next(void)");
    e.line("{");
    e.line(&format!(
        "    lcg_state = lcg_state * {}ULL + {}ULL;",
        Lcg::MULTIPLIER,
        Lcg::INCREMENT
    ));
    e.line("    return (float)(0.001 + 0.001 * (double)(lcg_state >> 40) / 16777216.0);");
    e.line("}");
    e.line("");

    e.line("int main(int argc, char** argv)");
    e.line("{");
    e.depth += 1;
    e.line("lcg_state = argc > 1 ? strtoull(argv[1], NULL, 10) : 0;");
    e.line("float* A = calloc((size_t)SLOTS * SLAB, sizeof(float));");
    e.line("if (!A)");
    e.line("    return 1;");
    e.line("for (long i = 0; i < (long)DEPTH * SLAB; i++)");
    e.line("    A[i] = lcg_next();");
    // Every slot shares the halo of slot 0.
    let padded_offset: Vec<String> = (0..n).map(|i| format!("p{i} * S{i}")).collect();
    let halo_test: Vec<String> = (0..n)
        .map(|i| format!("p{i} < H{i} || p{i} >= H{i} + D{i}"))
        .collect();
    for i in 0..n {
        e.line(&format!("for (long p{i} = 0; p{i} < P{i}; p{i}++) {{"));
        e.depth += 1;
    }
    e.line(&format!("if ({}) {{", halo_test.join(" || ")));
    e.line(&format!("    long o = {};", padded_offset.join(" + ")));
    e.line("    for (long s = 1; s < SLOTS; s++)");
    e.line("        A[s * SLAB + o] = A[o];");
    e.line("}");
    for _ in 0..n {
        e.close();
    }
    e.line("kernel(A);");
    e.line("for (long l = STEPS; l < STEPS + DEPTH; l++) {");
    e.depth += 1;
    for i in 0..n {
        e.line(&format!("for (long x{i} = 0; x{i} < D{i}; x{i}++) {{"));
        e.depth += 1;
    }
    let interior: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    e.line(&format!(
        "fwrite(&A[IDX(l, {})], sizeof(float), 1, stdout);",
        interior.join(", ")
    ));
    for _ in 0..n {
        e.close();
    }
    e.close();
    e.line("free(A);");
    e.line("return 0;");
    e.depth -= 1;
    e.line("}");
    Ok(e.out)
}
