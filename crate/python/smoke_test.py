"""Quick end-to-end check of the Python bindings.

Build the extension first, e.g. `maturin develop -m crates/py/Cargo.toml`, or
`cargo build --release -p bihm-py` and put `target/release/libbihm.so` on the
path as `bihm.so`.
"""

import math
import os
import tempfile

import bihm


def check_geometry():
    s2 = bihm.Manifold.sphere(3)
    y = s2.nearest_point([0.0, 0.0, 1.25])
    assert max(abs(a - b) for a, b in zip(y, [0.0, 0.0, 1.0])) < 1e-14
    p, p_perp = s2.projectors(y)
    for i in range(3):
        for j in range(3):
            assert abs(p[i][j] + p_perp[i][j] - (i == j)) < 1e-14
    b = s2.second_fundamental_form(y, [1.0, 0.0, 0.0], [1.0, 0.0, 0.0])
    assert abs(b[2] - 1.0) < 1e-14


def check_harmonics():
    rows = bihm.harmonic_basis(3)
    assert [r["multiplicity"] for r in rows] == [1, 4, 9, 16]
    assert [r["eigenvalue"] for r in rows] == [0.0, -3.0, -8.0, -15.0]
    assert bihm.eigenvalue(2) == -8.0 and bihm.multiplicity(2) == 9
    assert bihm.power_norm(-4.0, 0.05, "l2") > 0.0


def check_lorentz():
    w = [0.25] * 4
    assert abs(bihm.lorentz_norm([1.0] * 4, w, 2.0, None) - 1.0) < 1e-12
    lhs, rhs = bihm.duality_check([1.0, -0.5, 0.2, 0.0], [0.3, 0.1, -1.0, 2.0], w)
    assert lhs <= rhs


def check_flow_and_files():
    s2 = bihm.Manifold.sphere(3)
    u0 = bihm.perturbed_constant(s2, 0.5, 0.125, [0.0, 0.0, 1.0], 0.2)
    terms = bihm.tension_terms(u0, s2)
    assert "bilaplacian" in terms
    u, trace = bihm.flow(u0, s2, 5)
    energies = [e for _, e in trace["energy"]]
    assert all(b <= a for a, b in zip(energies, energies[1:]))
    assert trace["manifold_distance"] <= 1e-12
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "u.bhm4")
        u.write(path)
        back = bihm.Field.read(path)
        same = all(
            (math.isnan(a) and math.isnan(b)) or a == b for a, b in zip(u.values(), back.values())
        )
        assert same and back.h == 0.125
    try:
        bihm.Field.read("/nonexistent.bhm4")
    except ValueError:
        pass
    else:
        raise AssertionError("missing file accepted")


def check_bubble():
    u = bihm.planted_bubble(0.375, 1.0 / 32.0, [0.01, 0.0, -0.01, 0.005], 0.1)
    tree = bihm.analyze(u)
    assert len(tree["bubbles"]) == 1
    assert 0.05 < tree["bubbles"][0]["scale"] < 0.2


def main():
    check_geometry()
    check_harmonics()
    check_lorentz()
    check_flow_and_files()
    check_bubble()
    print(f"bihm {bihm.__version__}: smoke test passed")


if __name__ == "__main__":
    main()
