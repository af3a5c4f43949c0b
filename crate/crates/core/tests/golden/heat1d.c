/* heat1d */
#include <stdint.h>
#include <stdio.h>
#include <stdlib.h>

#define MAX(a, b) ((a) > (b) ? (a) : (b))
#define MIN(a, b) ((a) < (b) ? (a) : (b))

#define STEPS 4
#define DEPTH 1
#define SLOTS 3
#define SLAB 18
#define D0 16
#define H0 1
#define P0 18
#define S0 1
#define IDX(l, i0) ((((l) % SLOTS + SLOTS) % SLOTS) * SLAB + ((i0) + H0) * S0)

void kernel(float* restrict A)
{
    for (long t_blk = 0; t_blk < 4; t_blk += 2) {
        for (long x_blk = 0; x_blk < 20; x_blk += 4) {
            for (long t = MAX(0, t_blk); t < MIN(4, t_blk + 2); t++) {
                #pragma omp parallel for
                for (long x = MAX(t, x_blk); x < MIN(t + 16, x_blk + 4); x++) {
                    float acc = 0.5f * A[IDX(t, x - t)];
                    acc = acc + 0.25f * A[IDX(t, x - t - 1)];
                    acc = acc + 0.25f * A[IDX(t, x - t + 1)];
                    A[IDX(t + 1, x - t)] = acc;
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
        if (p0 < H0 || p0 >= H0 + D0) {
            long o = p0 * S0;
            for (long s = 1; s < SLOTS; s++)
                A[s * SLAB + o] = A[o];
        }
    }
    kernel(A);
    for (long l = STEPS; l < STEPS + DEPTH; l++) {
        for (long x0 = 0; x0 < D0; x0++) {
            fwrite(&A[IDX(l, x0)], sizeof(float), 1, stdout);
        }
    }
    free(A);
    return 0;
}
