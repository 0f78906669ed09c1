"""Smoke test for the `rie` extension module.

Build and install first:
    maturin build --release -m crates/python/Cargo.toml
    pip install target/wheels/rie-*.whl
"""

import math

import rie


def close(a, b, tol=1e-12):
    return abs(a - b) <= tol


def main():
    eig = rie.EigenSystem([[2.0, 1.0], [1.0, 2.0]])
    assert len(eig) == 2
    assert close(eig.values[0], 3.0) and close(eig.values[1], 1.0)
    assert close(eig.vector(0)[0], 1 / math.sqrt(2))
    rebuilt = eig.assemble(eig.values)
    assert all(close(rebuilt[i][j], [[2, 1], [1, 2]][i][j]) for i in range(2) for j in range(2))

    single = rie.EigenSystem([[1.0]])
    g = rie.stieltjes_g(single, 2, 1j)
    assert close(g.real, -0.25) and close(g.imag, -0.25)
    h = rie.h_functional(single, 2, 1j)
    assert abs(h - (1j * g - 0.5)) < 1e-15

    report = rie.clean([[1.0, -1.0]])
    assert report["q"] == 0.5 and report["T"] == 2
    eta = 2 ** -0.5
    assert close(report["cleaned_eigenvalues"][0], 1 / (0.25 + 0.25 / eta**2), 1e-14)

    sigma = rie.make_sigma("toeplitz:0.5:20")
    data = rie.sample_gaussian(sigma, 60, 7)
    assert len(data) == 20 and len(data[0]) == 60
    eig = rie.EigenSystem.from_data(data)
    cleaned = rie.lp_clean(eig, 60)
    oracle = rie.oracle_rie(eig, sigma)
    assert len(cleaned) == len(oracle) == 20
    err = lambda vals: rie.frobenius_norm(
        [[a - b for a, b in zip(ra, rb)] for ra, rb in zip(eig.assemble(vals), sigma)]
    )
    assert err(oracle) <= err(eig.values) + 1e-12

    ratio = rie.rn_ratio_oracle(eig, sigma, 60, 0, 1e-6)
    assert abs(ratio - oracle[0]) < 1e-4

    try:
        rie.EigenSystem([[1.0, 2.0], [0.0, 1.0]])
    except ValueError:
        pass
    else:
        raise AssertionError("asymmetric input accepted")

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
