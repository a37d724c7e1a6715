import gzip
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abmediation.data import (
    ColumnMapping,
    ObservationTable,
    ingest,
    read_csv,
    summarize,
    write_csv,
)
from abmediation.errors import BadTreatmentValue, DegenerateArm, MissingColumn, NonFiniteValue
from abmediation.lsem import arm_means, simulate

MAP = ColumnMapping("T", "M", "Y")


def rows(ts, ms, ys):
    return [{"T": str(t), "M": str(m), "Y": str(y)} for t, m, y in zip(ts, ms, ys)]


def test_ingest_counts():
    table = ingest(rows((0, 0, 1, 1), (1, 3, 4, 6), (0, 1, 0, 1)), MAP)
    assert (table.n_control, table.n_treated) == (2, 2)
    assert len(table) == 4
    assert list(table.mediator) == [1, 3, 4, 6]


def test_ingest_preserves_row_order():
    table = ingest(rows((1, 0, 1, 0), (9, 8, 7, 6), (1, 2, 3, 4)), MAP)
    assert [r.mediator for r in table.records] == [9, 8, 7, 6]
    assert [r.treatment for r in table.records] == [1, 0, 1, 0]


@pytest.mark.parametrize("bad", ["2", "-1", "0.5", "yes", "", "1.0"])
def test_bad_treatment(bad):
    src = rows((0, 0, 1, 1), (1, 3, 4, 6), (0, 1, 0, 1))
    src[1]["T"] = bad
    with pytest.raises(BadTreatmentValue):
        ingest(src, MAP)


@pytest.mark.parametrize("col,value", [("M", "nan"), ("Y", "inf"), ("Y", "-inf"), ("M", ""), ("Y", "abc")])
def test_non_finite(col, value):
    src = rows((0, 0, 1, 1), (1, 3, 4, 6), (0, 1, 0, 1))
    src[2][col] = value
    with pytest.raises(NonFiniteValue):
        ingest(src, MAP)


def test_missing_column():
    with pytest.raises(MissingColumn):
        ingest(rows((0, 0, 1, 1), (1, 3, 4, 6), (0, 1, 0, 1)), ColumnMapping("T", "clicks", "Y"))


@pytest.mark.parametrize("ts", [(0, 0, 0, 0), (1, 1, 1, 0), (0, 1, 1, 1)])
def test_degenerate_arm(ts):
    with pytest.raises(DegenerateArm):
        ingest(rows(ts, (1, 2, 3, 4), (0, 1, 0, 1)), MAP)


def test_unit_id_carried():
    src = [dict(r, uid=f"u{i}") for i, r in enumerate(rows((0, 0, 1, 1), (1, 3, 4, 6), (0, 1, 0, 1)))]
    table = ingest(src, ColumnMapping("T", "M", "Y", unit_id="uid"))
    assert table.unit_id == ("u0", "u1", "u2", "u3")


def test_table_is_immutable(tiny_table):
    with pytest.raises(ValueError):
        tiny_table.outcome[0] = 5.0


def test_summarize_tiny(tiny_table):
    control, treated = summarize(tiny_table)
    assert control.arm == "control" and treated.arm == "treatment"
    assert control.mean_outcome == 0.5 and treated.mean_outcome == 0.5
    assert control.mean_mediator == 2.0 and treated.mean_mediator == 5.0
    assert control.count == 2 and treated.count == 2


def test_csv_roundtrip_and_gzip(tmp_path, sim_table):
    for name in ("d.csv", "d.csv.gz"):
        path = tmp_path / name
        write_csv(sim_table, path, MAP)
        back = read_csv(path, MAP)
        np.testing.assert_array_equal(back.mediator, sim_table.mediator)
        np.testing.assert_array_equal(back.outcome, sim_table.outcome)
        np.testing.assert_array_equal(back.treatment, sim_table.treatment)
    with gzip.open(tmp_path / "d.csv.gz", "rt") as fh:
        assert fh.readline().strip() == "T,M,Y"


def test_read_csv_header_only(tmp_path):
    path = tmp_path / "h.csv"
    path.write_text("T,M,Y\n")
    with pytest.raises(DegenerateArm):
        read_csv(path, MAP)


def test_million_rows_means_match_single_pass(tmp_path, layered_spec):
    table = simulate(layered_spec, 1_000_000, 3)
    path = tmp_path / "big.csv"
    write_csv(table, path, MAP)
    back = read_csv(path, MAP)
    control, treated = summarize(back)
    # independent single-pass accumulation
    sums = {0: [0.0, 0.0, 0], 1: [0.0, 0.0, 0]}
    for t, m, y in zip(table.treatment.tolist(), table.mediator.tolist(), table.outcome.tolist()):
        acc = sums[int(t)]
        acc[0] += y
        acc[1] += m
        acc[2] += 1
    for summary, arm in ((control, 0), (treated, 1)):
        y_sum, m_sum, count = sums[arm]
        assert summary.count == count
        assert summary.mean_outcome == pytest.approx(y_sum / count, rel=1e-12, abs=1e-12)
        assert summary.mean_mediator == pytest.approx(m_sum / count, rel=1e-12, abs=1e-12)


def test_arm_means_match_structure(layered_spec):
    n = 200_000
    table = simulate(layered_spec, n, 21)
    control, treated = summarize(table)
    expected = arm_means(layered_spec)
    for summary, t in ((control, 0), (treated, 1)):
        sel = table.treatment == t
        m_exp, y_exp = expected[f"arm{t}"]
        se_m = table.mediator[sel].std(ddof=1) / math.sqrt(sel.sum())
        se_y = table.outcome[sel].std(ddof=1) / math.sqrt(sel.sum())
        assert abs(summary.mean_mediator - m_exp) < 4 * se_m
        assert abs(summary.mean_outcome - y_exp) < 4 * se_y


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.tuples(st.integers(0, 1), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=4, max_size=60),
    st.randoms(use_true_random=False),
)
def test_summary_is_order_independent(data, rnd):
    ts = [d[0] for d in data]
    if min(ts.count(0), ts.count(1)) < 2:
        return
    shuffled = list(data)
    rnd.shuffle(shuffled)
    a = summarize(ObservationTable.from_arrays(*zip(*data)))
    b = summarize(ObservationTable.from_arrays(*zip(*shuffled)))
    for x, y in zip(a, b):
        assert x.count == y.count
        assert x.mean_outcome == pytest.approx(y.mean_outcome, rel=1e-12, abs=1e-9)
        assert x.mean_mediator == pytest.approx(y.mean_mediator, rel=1e-12, abs=1e-9)
        assert math.isfinite(x.mean_outcome)
