"""Quick end-to-end check of the Python bindings."""

import math

import sgflow_py as sg


def main():
    k = sg.PhysicalConstants()
    box = sg.Domain.centred_box(1.0, 1.0, 1.0, k)
    assert abs(box.volume - 4.0) < 1e-12

    # A single seed orbits on an ellipse with a known period.
    orbit = sg.ellipse_orbit(box, [0.1, 0.0, 10.0], [0.0])
    assert abs(orbit["period"] - 30 * math.pi / 13) < 1e-12

    backend = sg.Backend(box)
    seed = sg.Ensemble([[0.1, 0.0, 10.0]])
    run = sg.simulate(backend, seed, tau=1.0, dt=0.01, newton_tol=1e-12)
    ref = sg.ellipse_orbit(box, [0.1, 0.0, 10.0], run["times"])["positions"]
    err = max(math.dist(a[0], b) for a, b in zip(run["positions"], ref))
    assert err < 1e-6, err
    assert run["energy_drift"] < 1e-9

    # Several seeds in a physical box: the solver hits the target masses.
    k2 = sg.PhysicalConstants(gamma=1.4, kappa=1.0, delta=0.05)
    slab = sg.Domain.box([0, 0, 1], [1, 1, 2], k2)
    seeds = sg.Ensemble([[0.2, 0.3, 1.3], [0.7, 0.6, 1.9], [0.5, 0.2, 2.6]])
    rep = sg.solve_dual(sg.Backend(slab), seeds)
    assert max(abs(r) for r in rep["residual"]) < 1e-8
    cells = sg.Backend(slab).cells(rep["w"], seeds)
    assert abs(sum(cells["mass"]) - 1.0) < 1e-8

    # Quantisation and W1.
    rest = sg.Domain.box([0, 0, 1], [1, 1, 1.8], k)
    assert abs(sg.steady_state_level(rest) - (0.2 + 1.8 * math.log(1.8)) / 0.8) < 1e-10
    coarse, fine = sg.quantize_steady(rest, 8), sg.quantize_steady(rest, 64)
    assert len(coarse) == 8 and len(fine) == 64
    d, nnz = sg.w1(coarse, fine)
    assert d > 0 and nnz >= 64
    assert sg.w1(fine, fine)[0] < 1e-12

    try:
        sg.PhysicalConstants(gamma=3.0)
    except ValueError:
        pass
    else:
        raise AssertionError("invalid constants accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
