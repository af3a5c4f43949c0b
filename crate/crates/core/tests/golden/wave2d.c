/* wave2d */
#include <stdint.h>
#include <stdio.h>
#include <stdlib.h>

#define MAX(a, b) ((a) > (b) ? (a) : (b))
#define MIN(a, b) ((a) < (b) ? (a) : (b))

#define STEPS 4
#define DEPTH 2
#define SLOTS 4
#define SLAB 168
#define D0 12
#define H0 1
#define P0 14
#define S0 12
#define D1 10
#define H1 1
#define P1 12
#define S1 1
#define IDX(l, i0, i1) ((((l) % SLOTS + SLOTS) % SLOTS) * SLAB + ((i0) + H0) * S0 + ((i1) + H1) * S1)

void kernel(float* restrict A)
{
    for (long t_blk = 0; t_blk < 4; t_blk += 2) {
        for (long x_blk = 0; x_blk < 16; x_blk += 4) {
            for (long y_blk = 0; y_blk < 14; y_blk += 5) {
                for (long t = MAX(0, t_blk); t < MIN(4, t_blk + 2); t++) {
                    #pragma omp parallel for
                    for (long x = MAX(t, x_blk); x < MIN(t + 12, x_blk + 4); x++) {
                        for (long y = MAX(t, y_blk); y < MIN(t + 10, y_blk + 5); y++) {
                            float acc = 1.6f * A[IDX(t + 1, x - t, y - t)];
                            acc = acc + 0.1f * A[IDX(t + 1, x - t - 1, y - t)];
                            acc = acc + 0.1f * A[IDX(t + 1, x - t + 1, y - t)];
                            acc = acc + 0.1f * A[IDX(t + 1, x - t, y - t - 1)];
                            acc = acc + 0.1f * A[IDX(t + 1, x - t, y - t + 1)];
                            acc = acc + -1.0f * A[IDX(t, x - t, y - t)];
                            A[IDX(t + 2, x - t, y - t)] = acc;
                        }
                    }
                }
            }
        }
    }
}

static uint64_t lcg_state;

static float lcg_next(void)
{
    lcg_state = lcg_state * 6364136223846793005ULL + 1442695040888963407ULL;
    return (float)(0.001 + 0.001 * (double)(lcg_state >> 40) / 16777216.0);
}

int main(int argc, char** argv)
{
    lcg_state = argc > 1 ? strtoull(argv[1], NULL, 10) : 0;
    float* A = calloc((size_t)SLOTS * SLAB, sizeof(float));
    if (!A)
        return 1;
    for (long i = 0; i < (long)DEPTH * SLAB; i++)
        A[i] = lcg_next();
    for (long p0 = 0; p0 < P0; p0++) {
        for (long p1 = 0; p1 < P1; p1++) {
            if (p0 < H0 || p0 >= H0 + D0 || p1 < H1 || p1 >= H1 + D1) {
                long o = p0 * S0 + p1 * S1;
                for (long s = 1; s < SLOTS; s++)
                    A[s * SLAB + o] = A[o];
            }
        }
    }
    kernel(A);
    for (long l = STEPS; l < STEPS + DEPTH; l++) {
        for (long x0 = 0; x0 < D0; x0++) {
            for (long x1 = 0; x1 < D1; x1++) {
                fwrite(&A[IDX(l, x0, x1)], sizeof(float), 1, stdout);
            }
        }
    }
    free(A);
    return 0;
}
