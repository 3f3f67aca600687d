"""Footstep MPC for underactuated bipedal walking on constrained footholds."""

__version__ = "0.1.0"


def _limit_blas_threads():
    # every dense factorization here is tiny (n < 200); multithreaded BLAS
    # pools cost far more in synchronization than they save
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(1, "blas")
    except Exception:  # pragma: no cover - best effort
        pass


_limit_blas_threads()
