from rydqmc.worldline import Configuration, Worldline


def pattern_config(spec, beta, pattern):
    """Ideal product-state configuration of one density-wave order.

    These are the classical (Delta/V -> infinity) ground states of each
    phase, used as deep-phase seeds where local updates cannot reach the
    order from a cold start.
    """
    lines = []
    for i in range(spec.n_sites):
        x, y = i % spec.Lx, i // spec.Lx
        if pattern == "star":
            occ = (x % 2 == 0 and y % 4 == 0) or (x % 2 == 1 and y % 4 == 2)
        elif pattern == "striated":
            occ = x % 2 == 0 and y % 2 == 0
        elif pattern == "checkerboard":
            occ = (x + y) % 2 == 0
        else:
            raise ValueError(f"unknown pattern {pattern!r}")
        lines.append(Worldline(int(occ)))
    return Configuration(beta=beta, lines=lines, spec=spec)


def total_energy_series(series, beta):
    """Total-energy estimator: diagonal part plus -kinks/beta."""
    return series.column("diag_energy") - series.column("kink_count") / beta
