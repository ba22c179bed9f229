"""Model RB derivation arithmetic and generation invariants."""
import itertools

import mpmath
import pytest

from csplab import rb
from csplab.network import save_instance


def mp_counts(m, n, alpha, beta, rho):
    """High-precision half-up evaluation of (d, e, q)."""
    with mpmath.workdps(60):
        d = int(mpmath.floor(mpmath.mpf(n) ** alpha + mpmath.mpf("0.5")))
        e = int(mpmath.floor(beta * n * mpmath.log(n) + mpmath.mpf("0.5")))
        q = int(mpmath.floor(mpmath.mpf(str(rho)) * d ** m + mpmath.mpf("0.5")))
    return d, e, q


def test_presets_match_quoted_parameters():
    p1 = rb.preset("D1", 15)
    assert (p1.m, p1.n, p1.alpha, p1.beta, p1.rho) == (2, 15, 0.7, 3.0, 0.21)
    p2 = rb.preset("D2", 10)
    assert (p2.m, p2.n, p2.alpha, p2.beta, p2.rho) == (3, 10, 0.7, 2.5, 0.24)
    p3 = rb.preset("D1", 40)
    assert (p3.m, p3.n, p3.alpha, p3.beta, p3.rho) == (2, 40, 0.7, 3.0, 0.21)
    with pytest.raises(ValueError):
        rb.preset("D9", 10)


def test_derive_counts_reference_values():
    assert rb.derive_counts(rb.preset("D1", 15)) == (7, 122, 10)
    assert rb.derive_counts(rb.RbParams(2, 2, 1.0, 1.0, 0.5)) == (2, 1, 2)


@pytest.mark.parametrize(
    "name,n",
    list(itertools.product(["D1"], [15, 20, 30, 40]))
    + list(itertools.product(["D2"], [10, 15, 20, 25])),
)
def test_derive_counts_match_high_precision(name, n):
    p = rb.preset(name, n)
    assert rb.derive_counts(p) == mp_counts(p.m, p.n, p.alpha, p.beta, p.rho)


def test_derive_counts_rejects_full_tightness():
    # rho high enough that every tuple would be disallowed
    with pytest.raises(ValueError):
        rb.derive_counts(rb.RbParams(2, 2, 1.0, 1.0, 0.9))
    with pytest.raises(ValueError):
        rb.derive_counts(rb.RbParams(2, 2, 1.0, 1.0, 1.5))
    with pytest.raises(ValueError):
        rb.derive_counts(rb.RbParams(1, 5, 0.7, 3.0, 0.2))


def test_generation_deterministic(tmp_path):
    p = rb.preset("D1", 15, seed=99)
    a, b, c = tmp_path / "a.csp", tmp_path / "b.csp", tmp_path / "c.csp"
    save_instance(rb.generate(p), a)
    save_instance(rb.generate(p), b)
    save_instance(rb.generate(rb.preset("D1", 15, seed=100)), c)
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()


def test_generation_structure():
    d, e, q = rb.derive_counts(rb.preset("D1", 15))
    for seed in range(100):
        net = rb.generate(rb.preset("D1", 15, seed=seed))
        assert net.n == 15
        assert net.e == e
        for con in net.constraints:
            assert len(set(con.scope)) == 2
            assert len(con.allowed) == d * d - q
            assert len(con.allowed_set) == len(con.allowed)
            assert list(con.allowed) == sorted(con.allowed)


def test_generation_d2_arity3():
    net = rb.generate(rb.preset("D2", 10, seed=5))
    d, e, q = rb.derive_counts(rb.preset("D2", 10))
    assert all(c.arity == 3 for c in net.constraints)
    assert all(len(c.allowed) == d ** 3 - q for c in net.constraints)


def test_corpus_writer(tmp_path):
    out = tmp_path / "corpus"
    files = rb.generate_corpus(out, "D1", 15, 5, seed=3)
    assert len(files) == 5
    manifest = (out / "manifest.txt").read_text().splitlines()
    assert len(manifest) == 5
    assert all("m=2 n=15" in line for line in manifest)
    # same seed regenerates bit-identical corpus
    out2 = tmp_path / "corpus2"
    rb.generate_corpus(out2, "D1", 15, 5, seed=3)
    for f in files:
        assert (out / f).read_bytes() == (out2 / f).read_bytes()
    assert (out / "manifest.txt").read_text() == (out2 / "manifest.txt").read_text()
