"""Paired t-test against a high-precision oracle; report assembly."""
import math
import random

import mpmath
import numpy as np
import pytest

from csplab import rb
from csplab.report import (
    EvalReport,
    InstanceRow,
    build_report,
    evaluate_corpus,
    paired_t_test,
    read_rows_csv,
    render_table,
    write_rows_csv,
    write_summary_csv,
)


def mp_t_cdf(t, df):
    """P(T <= t) via numeric integration of the t density."""
    with mpmath.workdps(40):
        c = mpmath.gamma((df + 1) / 2) / (
            mpmath.sqrt(df * mpmath.pi) * mpmath.gamma(df / 2)
        )
        pdf = lambda x: c * (1 + x * x / df) ** (-(df + 1) / 2)
        lo = mpmath.mpf(t) - 400
        return float(mpmath.quad(pdf, [lo, mpmath.mpf(t)]))


def test_t_test_identical_samples():
    assert paired_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 1.0


def test_t_test_constant_shift_degenerate():
    b = [5.0, 9.0, 13.0]
    a = [x - 2.0 for x in b]
    assert paired_t_test(a, b) == 0.0
    a_up = [x + 2.0 for x in b]
    assert paired_t_test(a_up, b) == 1.0


def test_t_test_rejects_bad_input():
    with pytest.raises(ValueError):
        paired_t_test([1.0], [2.0])
    with pytest.raises(ValueError):
        paired_t_test([1.0, 2.0], [1.0, 2.0, 3.0])


def test_t_test_matches_reference_cdf():
    rng = random.Random(0)
    for case in range(12):
        n = rng.randint(5, 30)
        b = [rng.gauss(50, 10) for _ in range(n)]
        a = [x + rng.gauss(-1.0, 4.0) for x in b]
        d = np.array(a) - np.array(b)
        t = d.mean() / (d.std(ddof=1) / math.sqrt(n))
        expect = mp_t_cdf(t, n - 1)
        assert paired_t_test(a, b) == pytest.approx(expect, abs=1e-6)


def _row(inst, policy, nodes, solved="sat", failures=0, total=0.01, infer=0.001):
    return InstanceRow(
        instance=inst, policy=policy, solved=solved, nodes=nodes,
        failures=failures, steps=nodes - 1, total_seconds=total,
        inference_seconds=infer,
    )


def test_reduction_on_commonly_solved_subset():
    rows = []
    for i in range(4):
        rows.append(_row(f"i{i}", "drl", nodes=10))
        rows.append(_row(f"i{i}", "slowpoke", nodes=20))
    # an instance only the reference solves must not affect the reduction
    rows.append(_row("i4", "drl", nodes=1000))
    rows.append(_row("i4", "slowpoke", nodes=500_000, solved="cutoff"))
    rep = build_report(rows, reference="drl")
    s = rep.summary_for("slowpoke")
    assert s.timeouts == 1
    assert s.reduction_vs_ref_pct == pytest.approx(50.0)
    assert s.p_value == 0.0  # constant difference, strictly negative
    # the "Average" column still uses all instances, cutoffs included
    assert s.mean_nodes == pytest.approx((4 * 20 + 500_000) / 5)


def test_reference_against_itself_is_degenerate():
    rows = [_row(f"i{i}", "mindom", nodes=10 + i) for i in range(5)]
    rep = build_report(rows, reference="mindom")
    s = rep.summary_for("mindom")
    assert s.reduction_vs_ref_pct == pytest.approx(0.0)
    assert s.p_value == 1.0


def test_report_csv_recompute(tmp_path):
    rng = random.Random(1)
    rows = []
    for i in range(8):
        for pol in ("a", "b"):
            rows.append(
                _row(
                    f"i{i}", pol, nodes=rng.randint(5, 50),
                    solved="sat" if rng.random() < 0.9 else "cutoff",
                    failures=rng.randint(0, 10),
                    total=rng.random(), infer=rng.random() * 0.2,
                )
            )
    rep = build_report(rows, reference="a")
    path = tmp_path / "rows.csv"
    write_rows_csv(rows, path)
    rep2 = build_report(read_rows_csv(path), reference="a")
    for s1 in rep.summaries:
        s2 = rep2.summary_for(s1.policy)
        assert s1.mean_nodes == pytest.approx(s2.mean_nodes)
        assert s1.mean_failures == pytest.approx(s2.mean_failures)
        assert s1.timeouts == s2.timeouts
        assert s1.inference_share_pct == pytest.approx(s2.inference_share_pct)
        if s1.p_value is None:
            assert s2.p_value is None
        else:
            assert s1.p_value == pytest.approx(s2.p_value)
    write_summary_csv(rep, tmp_path / "summary.csv")
    assert (tmp_path / "summary.csv").read_text().count("\n") == len(rep.summaries) + 1


def test_evaluate_corpus_end_to_end(tmp_path):
    rb.generate_corpus(tmp_path / "c", "D1", 10, 6, seed=2)
    rep = evaluate_corpus(
        tmp_path / "c", ["mindom", "domddeg"], reference="domddeg",
        node_cutoff=50_000,
    )
    assert {s.policy for s in rep.summaries} == {"mindom", "domddeg"}
    assert len(rep.rows) == 12
    table = render_table(rep)
    assert "mindom" in table and "domddeg" in table
    assert rep.summary_for("domddeg").reduction_vs_ref_pct == pytest.approx(0.0)


def test_evaluate_corpus_missing_checkpoint():
    with pytest.raises(ValueError, match="checkpoint"):
        from csplab.report import make_policy

        make_policy("drl")
