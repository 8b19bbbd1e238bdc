from rwrw_lab import cond_poisson, decomposition, experiments

__all__ = ["cond_poisson", "decomposition", "experiments"]
