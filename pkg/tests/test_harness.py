import math
import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from sogas.dists import TruncatedExponential
from sogas.harness import (
    CSV_HEADER,
    ConfigError,
    ExperimentConfig,
    ExperimentRow,
    Replication,
    advantage_ratios,
    aggregate,
    emit_csv,
    emit_plot,
    exponential_loc_for_mean,
    format_value,
    generate_instance,
    load_instance,
    loglog_slope,
    parse_instance,
    read_csv,
    replication_seed,
    rows_csv,
    run_cells,
    run_sweep,
    trace_rows_csv,
)
from sogas.qsub import PHASES

# -- instances ------------------------------------------------------------------------


@pytest.mark.parametrize("seed", range(5))
def test_bernoulli_instance(seed):
    inst = generate_instance("bernoulli", 10, seed)
    means = inst.means
    assert len(means) == 10
    assert np.all((means >= 0.78) & (means <= 0.85))
    assert (means == means.max()).sum() == 1


def test_gaussian_instance_span():
    means = generate_instance("gaussian", 10, 0).means
    assert means.min() >= 0.40 and means.max() <= 0.86
    assert means.max() - means.min() > 0.25


@pytest.mark.parametrize("family", ["uniform", "exponential"])
def test_other_families_have_unique_best(family):
    means = generate_instance(family, 10, 0).means
    assert (means == means.max()).sum() == 1
    assert np.all((means > 0) & (means < 1))


def test_exponential_loc_hits_target_mean():
    loc = exponential_loc_for_mean(0.7, 2.5)
    assert TruncatedExponential(2.5, loc).mean() == pytest.approx(0.7, abs=1e-9)
    with pytest.raises(ConfigError):
        exponential_loc_for_mean(0.01, 2.5)


def test_instance_is_seeded():
    a, b = generate_instance("bernoulli", 8, 3), generate_instance("bernoulli", 8, 3)
    assert np.array_equal(a.means, b.means)
    assert not np.array_equal(a.means, generate_instance("bernoulli", 8, 4).means)


def test_large_bernoulli_instance_generates():
    assert (lambda m: (m == m.max()).sum())(generate_instance("bernoulli", 128, 0).means) == 1


def test_size_two_instance_is_solvable():
    cfg = ExperimentConfig(sweep="size", values=[2], replications=3)
    rows = run_sweep(cfg)
    assert [r.method for r in rows] == ["SOGAS", "CSOGAS"]
    assert all(r.pcs == 1.0 for r in rows)


def test_generate_rejects_bad_input():
    with pytest.raises(ConfigError):
        generate_instance("slippage", 5, 0)
    with pytest.raises(ConfigError):
        generate_instance("bernoulli", 1, 0)


# -- instance files --------------------------------------------------------------------


GOOD_FILE = """
# two solutions and a comment
a bernoulli 0.3
b gaussian 0.6 0.1
c uniform 0.2 0.5
d exponential 2.5
e exponential 2.5 0.4
"""


def test_parse_instance_grammar():
    inst = parse_instance(GOOD_FILE, 0.1, 0.05, k=2)
    assert [s.id for s in inst.solutions] == list("abcde")
    assert inst.solutions[0].mean == pytest.approx(0.3)
    assert all(s.dist.k == 2 for s in inst.solutions[1:])


@pytest.mark.parametrize(
    "text",
    [
        "a bernoulli 0.3",
        "a bernoulli 0.3\nb poisson 1",
        "a bernoulli 0.3\nb bernoulli",
        "a bernoulli 0.3\nb bernoulli 0.2 0.1",
        "a bernoulli 0.3\nb bernoulli x",
        "a bernoulli 0.3\nb bernoulli 1.3",
        "a bernoulli 0.3\na bernoulli 0.2",
        "a bernoulli 0.3\nx_a bernoulli 0.2",
    ],
)
def test_parse_instance_errors(text):
    with pytest.raises(ConfigError):
        parse_instance(text, 0.1, 0.05)


def test_load_instance(tmp_path):
    p = tmp_path / "inst.txt"
    p.write_text(GOOD_FILE)
    assert load_instance(p, 0.1, 0.05).size == 5
    with pytest.raises(ConfigError):
        load_instance(tmp_path / "missing.txt", 0.1, 0.05)


# -- configuration -----------------------------------------------------------------------


@pytest.mark.parametrize(
    "kw",
    [
        dict(sweep="width"),
        dict(values=[]),
        dict(replications=0),
        dict(eps=0),
        dict(delta=1),
        dict(backend="gpu"),
        dict(cost_constant=0),
        dict(workers=0),
        dict(values=[1]),
        dict(values=[2.5]),
        dict(values=["ten"]),
        dict(sweep="gap", values=[1]),
        dict(sweep="distribution", values=["cauchy"]),
    ],
)
def test_config_errors(kw):
    with pytest.raises(ConfigError):
        ExperimentConfig(**kw)


def test_gap_sweep_instances_share_means():
    cfg = ExperimentConfig(sweep="gap", values=[5, 20], size=6)
    a, b = cfg.instance_for(5), cfg.instance_for(20)
    assert a.eps == pytest.approx(0.2) and b.eps == pytest.approx(0.05)
    assert np.array_equal(a.means, b.means)


def test_format_value():
    assert format_value(10) == "10"
    assert format_value(10.0) == "10"
    assert format_value(12.5) == "12.5"
    assert format_value("gaussian") == "gaussian"


def test_replication_seeds_are_independent_streams():
    seeds = {
        tuple(replication_seed(0, m, v, r).generate_state(2))
        for m in ("SOGAS", "CSOGAS")
        for v in (5, 10)
        for r in range(3)
    }
    assert len(seeds) == 12
    a = replication_seed(1, "SOGAS", 5, 0).generate_state(4)
    assert np.array_equal(a, replication_seed(1, "SOGAS", 5.0, 0).generate_state(4))


# -- aggregation -------------------------------------------------------------------------


def fake_reps(totals, correct=None):
    correct = correct or [True] * len(totals)
    return [
        Replication("SOGAS", 5, i, t, {p: (t if p == "amplify" else 0) for p in PHASES}, c, "s0", [])
        for i, (t, c) in enumerate(zip(totals, correct))
    ]


def test_aggregate_matches_independent_computation():
    totals = [120, 80, 400, 95, 310]
    row = aggregate("SOGAS", 5, fake_reps(totals, [True, True, False, True, True]))
    mean = sum(totals) / 5
    sd = math.sqrt(sum((t - mean) ** 2 for t in totals) / 4)
    assert row.mean_queries == pytest.approx(mean, abs=1e-9)
    assert row.ci95 == pytest.approx(1.96 * sd / math.sqrt(5), abs=1e-9)
    assert row.pcs == pytest.approx(0.8)
    assert row.queries_amplify == pytest.approx(mean) and row.queries_region == 0


def test_single_replication_ci_is_zero():
    assert aggregate("SOGAS", 5, fake_reps([77])).ci95 == 0.0
    rows = run_sweep(ExperimentConfig(values=[3], replications=1))
    assert all(r.ci95 == 0.0 for r in rows)


def test_phase_columns_add_up():
    res = run_cells(ExperimentConfig(values=[4], replications=3))
    for row in res.rows:
        parts = row.queries_region + row.queries_flag + row.queries_estimate + row.queries_amplify
        assert parts + row.queries_classical == pytest.approx(row.mean_queries)
    for rep in res.replications:
        assert rep.total == sum(rep.phases.values())


# -- sweeps and output ----------------------------------------------------------------------


@pytest.fixture(scope="module")
def size_rows():
    return run_sweep(ExperimentConfig(sweep="size", values=[3, 4, 5, 6, 7], replications=2))


def test_size_sweep_shape(size_rows):
    assert len(size_rows) == 10
    assert [r.sweep_value for r in size_rows[::2]] == ["3", "4", "5", "6", "7"]
    assert all(0 <= r.pcs <= 1 for r in size_rows)


def test_csv_lines_and_round_trip(size_rows, tmp_path):
    path = emit_csv(size_rows, tmp_path / "out.csv")
    lines = path.read_text().splitlines()
    assert len(lines) == 11 and lines[0] == CSV_HEADER
    for line in lines[1:]:
        pcs = line.split(",")[4]
        assert re.fullmatch(r"\d\.\d+", pcs)
    assert read_csv(path) == size_rows


def test_read_csv_rejects_foreign_header(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ConfigError):
        read_csv(p)


def test_sweep_is_deterministic(tmp_path):
    cfg = dict(sweep="size", values=[3, 5], replications=2, seed=11)
    a = rows_csv(run_sweep(ExperimentConfig(**cfg)))
    b = rows_csv(run_sweep(ExperimentConfig(**cfg)))
    assert a == b
    c = rows_csv(run_sweep(ExperimentConfig(**(cfg | {"seed": 12}))))
    assert a != c


def test_parallel_workers_match_serial():
    cfg = dict(sweep="size", values=[3, 4], replications=2, seed=5)
    serial = rows_csv(run_sweep(ExperimentConfig(**cfg)))
    parallel = rows_csv(run_sweep(ExperimentConfig(**cfg, workers=2)))
    assert serial == parallel


def test_adding_a_sweep_value_keeps_existing_cells():
    small = run_sweep(ExperimentConfig(values=[3], replications=2, seed=2))
    large = run_sweep(ExperimentConfig(values=[3, 4], replications=2, seed=2))
    assert large[:2] == small


def test_trace_csv_columns():
    res = run_cells(ExperimentConfig(values=[3], replications=2))
    lines = trace_rows_csv(res.replications).splitlines()
    assert lines[0] == "method,sweep_value,replication,t,a,b,r_t,branch"
    expected = sum(len(r.trace) for r in res.replications)
    assert len(lines) == expected + 1
    assert all(len(line.split(",")) == 8 for line in lines)


def read_dat(path):
    lines = path.read_text().splitlines()
    return lines[0].split()[1:], [line.split() for line in lines[1:]]


def test_size_plot_shape(size_rows, tmp_path):
    svg, dat = emit_plot(size_rows, tmp_path / "size.svg")
    ET.parse(svg)
    header, body = read_dat(dat)
    assert header == ["sweep_value", "SOGAS", "SOGAS_ci95", "CSOGAS", "CSOGAS_ci95"]
    assert len(body) == 5 and all(len(r) == 5 for r in body)
    assert svg.read_text().count("<polyline") == 2


def test_gap_plot_log_axes_is_monotone(tmp_path):
    rows = run_sweep(ExperimentConfig(sweep="gap", values=[5, 10, 15, 20, 25], replications=2))
    svg, dat = emit_plot(rows, tmp_path / "gap.svg", log_axes=True)
    ET.parse(svg)
    _, body = read_dat(dat)
    for col in (1, 3):
        ys = [float(r[col]) for r in body]
        assert all(b > a for a, b in zip(ys, ys[1:]))


def test_distribution_plot_grouped_bars(tmp_path):
    rows = run_sweep(ExperimentConfig(sweep="distribution", values=["gaussian", "uniform", "exponential"], dist_size=4, replications=2))
    svg, dat = emit_plot(rows, tmp_path / "dist.svg")
    text = svg.read_text()
    ET.parse(svg)
    bars = re.findall(r'<rect x="[\d.]+" y="[\d.]+" width="\d+\.\d\d"', text)
    assert len(bars) == 6
    _, body = read_dat(dat)
    assert [r[0] for r in body] == ["gaussian", "uniform", "exponential"]


def test_emit_rejects_empty(tmp_path):
    with pytest.raises(ConfigError):
        emit_csv([], tmp_path / "x.csv")
    with pytest.raises(ConfigError):
        emit_plot([], tmp_path / "x.svg")


def test_slope_and_ratios():
    xs = [4, 8, 16, 32]
    assert loglog_slope(xs, [3 * x**0.5 for x in xs]) == pytest.approx(0.5)
    rows = [
        ExperimentRow("SOGAS", "5", 10.0, 0, 1, 0, 0, 0, 10, 0),
        ExperimentRow("CSOGAS", "5", 70.0, 0, 1, 0, 0, 0, 0, 70),
    ]
    assert advantage_ratios(rows) == {"5": 7.0}
