import os

# Cap BLAS pools before numpy loads anywhere: keeps linear algebra reductions
# identical no matter how many worker processes the experiment runner forks.
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")
