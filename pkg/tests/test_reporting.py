"""Report emission formats."""

from multivox.evaluation import MetricReport, MetricRow, PreferenceTally
from multivox.reporting import (
    render_report,
    write_metric_csv,
    write_plot_data,
    write_preference_csv,
)


def _report():
    rows = []
    for strategy in ("SD", "MU"):
        for speaker in ("spk01", "spk02", "ALL"):
            rows.append(
                MetricRow(
                    speaker=speaker,
                    strategy=strategy,
                    mcd_db=1.25 if strategy == "MU" else 2.5,
                    f0_corr=None if speaker == "spk01" else 0.75,
                    vuv_error_rate=0.125,
                    n_frames_scored=40,
                )
            )
    return MetricReport(rows)


def test_metric_csv_layout(tmp_path):
    path = tmp_path / "report.csv"
    write_metric_csv(_report(), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "speaker,strategy,metric,value"
    assert "spk01,SD,mcd_db,2.5" in lines
    assert "spk01,SD,f0_corr," in lines  # undefined -> empty cell
    assert "ALL,MU,n_frames_scored,40" in lines
    # 2 strategies x 3 speakers x 4 metrics
    assert len(lines) == 1 + 24


def test_csv_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_metric_csv(_report(), a)
    write_metric_csv(_report(), b)
    assert a.read_bytes() == b.read_bytes()


def test_plot_data_wide_format(tmp_path):
    paths = write_plot_data(_report(), tmp_path)
    assert {p.name for p in paths} == {"mcd_db.csv", "f0_corr.csv", "vuv_error_rate.csv"}
    lines = (tmp_path / "mcd_db.csv").read_text().splitlines()
    assert lines[0] == "speaker,SD,MU"
    assert lines[1] == "spk01,2.5,1.25"
    assert lines[-1].startswith("ALL,")


def test_preference_csv(tmp_path):
    tally = PreferenceTally(("EN", "MU"), {"spk01": (9, 1), "spk02": (5, 5)})
    path = tmp_path / "pref.csv"
    write_preference_csv(tally, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "speaker,wins_EN,wins_MU,p_value,significant"
    assert lines[1].startswith("spk01,9,1,")
    assert lines[-1].startswith("ALL,14,6,")


def test_render_report_writes_figures(tmp_path):
    tally = PreferenceTally(("MU", "SD"), {"spk01": (8, 2), "spk02": (6, 4)})
    paths = render_report(_report(), tmp_path / "out", tallies=[tally])
    for key in ("csv", "json", "figures/mcd_db", "figures/preference_MU-SD"):
        assert paths[key].exists(), key
    assert paths["figures/mcd_db"].stat().st_size > 1000  # a real PNG, not a stub
