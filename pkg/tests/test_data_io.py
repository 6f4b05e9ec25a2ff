"""Field-data parsing, observer reconciliation, per-transect summaries."""

import io
from dataclasses import dataclass
from datetime import datetime, timezone

import pytest

from dronesurvey.data_io import (CtDeployment, EncounterSequence,
                                 SightingRecord, TransectCount, format_utc,
                                 parse_encounters, parse_sightings,
                                 parse_utc, read_transect_counts_csv,
                                 reconcile_observers, summarize_by_transect,
                                 write_deployments_csv, write_sequences_csv,
                                 write_sightings_csv,
                                 write_transect_counts_csv)
from dronesurvey.errors import (ConfigError, DegenerateInputError,
                                ValidationError)

HEADER = "transect_id,species,count,x_m,y_m,timestamp,observer\n"


@dataclass(frozen=True)
class FakeTransect:
    id: str
    covered_area_km2: float


def sighting_row(tid="T001", species="roe_deer", count=1, x=4510.2,
                 y=8821.0, ts="2024-10-26T09:15:00Z", obs="obs_A"):
    return f"{tid},{species},{count},{x},{y},{ts},{obs}\n"


def make_record(tid="T001", count=1, obs="obs_A", species="roe_deer"):
    return SightingRecord(tid, species, count, 0.0, 0.0,
                          datetime(2024, 10, 26, 9, tzinfo=timezone.utc), obs)


def test_parse_utc_variants():
    want = datetime(2024, 10, 26, 9, 15, tzinfo=timezone.utc)
    assert parse_utc("2024-10-26T09:15:00Z") == want
    assert parse_utc("2024-10-26T09:15:00+00:00") == want
    assert parse_utc("2024-10-26T11:15:00+02:00") == want
    assert parse_utc("2024-10-26T09:15:00") == want  # naive treated as UTC
    assert format_utc(want) == "2024-10-26T09:15:00Z"
    with pytest.raises(ValidationError):
        parse_utc("26.10.2024 09:15")


def test_parse_sightings_empty_file():
    result = parse_sightings(io.StringIO(HEADER))
    assert result.records == []
    assert result.errors == []
    assert result.n_rows == 0


def test_parse_sightings_single_row():
    text = HEADER + "T12,roe_deer,3,4510.2,8821.0,2024-10-26T09:15:00Z,obs_A\n"
    result = parse_sightings(io.StringIO(text))
    assert len(result.records) == 1
    rec = result.records[0]
    assert rec == SightingRecord(
        "T12", "roe_deer", 3, 4510.2, 8821.0,
        datetime(2024, 10, 26, 9, 15, tzinfo=timezone.utc), "obs_A")


def test_parse_sightings_37_rows():
    rows = "".join(sighting_row(tid=f"T{k:03d}", count=1 + k % 3)
                   for k in range(37))
    result = parse_sightings(io.StringIO(HEADER + rows))
    assert len(result.records) == 37
    assert result.errors == []


def test_parse_sightings_species_filter():
    text = HEADER + sighting_row(species="roe_deer") \
        + sighting_row(species="red_fox") + sighting_row(species="roe_deer")
    result = parse_sightings(io.StringIO(text), species_filter="roe_deer")
    assert len(result.records) == 2
    assert all(r.species == "roe_deer" for r in result.records)
    assert result.errors == []


def test_parse_sightings_missing_column_fatal():
    with pytest.raises(ValidationError, match="observer"):
        parse_sightings(io.StringIO(
            "transect_id,species,count,x_m,y_m,timestamp\n"))
    with pytest.raises(ValidationError, match="header"):
        parse_sightings(io.StringIO(""))


def test_parse_sightings_error_isolation():
    # k malformed among n -> n-k records plus k line-numbered diagnostics
    rows = [
        sighting_row(count=2),                      # line 2, good
        sighting_row(count="two"),                  # line 3, bad int
        sighting_row(count=0),                      # line 4, count < 1
        sighting_row(ts="yesterday"),               # line 5, bad timestamp
        sighting_row(x="nan"),                      # line 6, non-finite
        sighting_row(count=5),                      # line 7, good
        "T9,roe_deer\n",                            # line 8, short row
    ]
    result = parse_sightings(io.StringIO(HEADER + "".join(rows)))
    assert result.n_rows == 7
    assert len(result.records) == 2
    assert [e.line for e in result.errors] == [3, 4, 5, 6, 8]
    assert [r.count for r in result.records] == [2, 5]


def test_reconcile_agreeing_observers_is_identity():
    recs = [make_record("T1", 2, "obs_A"), make_record("T2", 1, "obs_A"),
            make_record("T1", 2, "obs_B"), make_record("T2", 1, "obs_B")]
    merged = reconcile_observers(recs, "max")
    assert merged == [r for r in recs if r.observer == "obs_A"]
    assert reconcile_observers(recs, "first") == merged


def test_reconcile_max_takes_larger_total():
    recs = [make_record("T1", 3, "obs_A"), make_record("T1", 1, "obs_A"),
            make_record("T1", 2, "obs_B")]
    merged = reconcile_observers(recs, "max")
    assert sum(r.count for r in merged) == 4
    assert {r.observer for r in merged} == {"obs_A"}
    # per-transect choice: obs_B can win elsewhere
    recs += [make_record("T2", 1, "obs_A"), make_record("T2", 6, "obs_B")]
    merged = reconcile_observers(recs, "max")
    by_tid = {}
    for r in merged:
        by_tid.setdefault(r.transect_id, 0)
        by_tid[r.transect_id] += r.count
    assert by_tid == {"T1": 4, "T2": 6}


def test_reconcile_first_keeps_designated_observer():
    recs = [make_record("T1", 3, "obs_A"), make_record("T1", 9, "obs_B"),
            make_record("T2", 2, "obs_B")]
    merged = reconcile_observers(recs, "first")
    assert all(r.observer == "obs_A" for r in merged)
    assert sum(r.count for r in merged) == 3
    merged_b = reconcile_observers(recs, "first",
                                   designated_observer="obs_B")
    assert sum(r.count for r in merged_b) == 11
    with pytest.raises(ConfigError):
        reconcile_observers(recs, "first", designated_observer="obs_Z")


def test_reconcile_mean_rounded_rounds_half_up():
    recs = [make_record("T1", 3, "obs_A"), make_record("T1", 4, "obs_B")]
    merged = reconcile_observers(recs, "mean_rounded")
    assert len(merged) == 1
    assert merged[0].count == 4  # 3.5 rounds half-up
    assert merged[0].observer == "merged"
    recs = [make_record("T1", 3, "obs_A"), make_record("T1", 6, "obs_B")]
    assert reconcile_observers(recs, "mean_rounded")[0].count == 5  # 4.5 -> 5


def test_reconcile_unknown_strategy():
    with pytest.raises(ConfigError):
        reconcile_observers([make_record()], "median")
    assert reconcile_observers([], "max") == []


def transect_list(n, area=0.019):
    return [FakeTransect(f"T{k:03d}", area) for k in range(1, n + 1)]


def test_summarize_zero_inclusion_and_conservation():
    # 40 transects, sightings on 9 -> 31 zeros, zero fraction 0.775
    transects = transect_list(40)
    recs = []
    for k in range(1, 10):
        recs.append(make_record(f"T{k:03d}", count=2))
        recs.append(make_record(f"T{k:03d}", count=1, obs="obs_B"))
    counts = summarize_by_transect(recs, transects)
    assert len(counts) == 40
    assert [c.transect_id for c in counts] == [t.id for t in transects]
    assert sum(c.animal_count for c in counts) == sum(r.count for r in recs)
    zeros = sum(1 for c in counts if c.animal_count == 0)
    assert zeros == 31
    assert zeros / len(counts) == pytest.approx(0.775)


def test_summarize_zero_fraction_second_survey_shape():
    # 45 transects, 17 with sightings -> zero fraction 0.6222
    transects = transect_list(45)
    recs = [make_record(f"T{k:03d}") for k in range(1, 18)]
    counts = summarize_by_transect(recs, transects)
    zeros = sum(1 for c in counts if c.animal_count == 0)
    assert zeros / 45 == pytest.approx(0.6222, abs=5e-5)


def test_summarize_no_sightings_all_zero():
    counts = summarize_by_transect([], transect_list(12))
    assert len(counts) == 12
    assert all(c.animal_count == 0 for c in counts)


def test_summarize_unknown_transect_fatal():
    with pytest.raises(ValidationError, match="T099"):
        summarize_by_transect([make_record("T099")], transect_list(5))
    with pytest.raises(DegenerateInputError):
        summarize_by_transect([], [])


def test_summarize_accepts_survey_design():
    from dronesurvey.geometry import PlanarPoint, SurveyRegion
    from dronesurvey.geoplan import GridSpec, plan_design
    design = plan_design(SurveyRegion.rectangle(1400.0, 1400.0), GridSpec(),
                         [PlanarPoint(350.0, 350.0)], 1,
                         flights_per_launch=1)
    tid = design.transects()[0].id
    counts = summarize_by_transect([make_record(tid, count=3)], design)
    assert len(counts) == len(design.transects())
    assert counts[0].covered_area_km2 > 0


def test_transect_count_invariants():
    with pytest.raises(ValidationError):
        TransectCount("T1", -1, 0.02)
    with pytest.raises(ValidationError):
        TransectCount("T1", 0, 0.0)


DEP_HEADER = ("camera_id,x_m,y_m,start,end,detection_radius_m,"
              "detection_angle_rad,mount_height_m\n")
SEQ_HEADER = "camera_id,start,end,group_size\n"


def dep_row(cid="C01", start="2024-10-01T00:00:00Z",
            end="2024-10-31T00:00:00Z", r=12.0, theta=0.7):
    return f"{cid},100.0,200.0,{start},{end},{r},{theta},1.0\n"


def seq_row(cid="C01", start="2024-10-05T06:00:00Z",
            end="2024-10-05T06:01:00Z", group=1):
    return f"{cid},{start},{end},{group}\n"


def test_parse_encounters_valid():
    deps_text = DEP_HEADER + "".join(dep_row(cid=f"C{k:02d}")
                                     for k in range(1, 22))
    seqs_text = SEQ_HEADER + seq_row("C03") + seq_row("C07", group=4)
    deps, seqs = parse_encounters(io.StringIO(deps_text),
                                  io.StringIO(seqs_text))
    assert len(deps) == 21
    assert len(seqs) == 2
    assert deps[0].active_days == pytest.approx(30.0)
    assert deps[0].burst_size == 8
    assert seqs[1].group_size == 4


def test_parse_encounters_zero_sequences_ok():
    deps, seqs = parse_encounters(io.StringIO(DEP_HEADER + dep_row()),
                                  io.StringIO(SEQ_HEADER))
    assert len(deps) == 1 and seqs == []


def test_parse_encounters_sequence_outside_window():
    seqs_text = SEQ_HEADER + seq_row(start="2024-09-30T23:00:00Z",
                                     end="2024-09-30T23:01:00Z")
    with pytest.raises(ValidationError, match="outside deployment window"):
        parse_encounters(io.StringIO(DEP_HEADER + dep_row()),
                         io.StringIO(seqs_text))


def test_parse_encounters_unknown_camera():
    with pytest.raises(ValidationError, match="unknown camera"):
        parse_encounters(io.StringIO(DEP_HEADER + dep_row()),
                         io.StringIO(SEQ_HEADER + seq_row("C99")))


def test_parse_encounters_field_validation():
    bad_interval = dep_row(start="2024-10-31T00:00:00Z",
                           end="2024-10-01T00:00:00Z")
    with pytest.raises(ValidationError, match="interval"):
        parse_encounters(io.StringIO(DEP_HEADER + bad_interval),
                         io.StringIO(SEQ_HEADER))
    with pytest.raises(ValidationError, match="radius"):
        parse_encounters(io.StringIO(DEP_HEADER + dep_row(r=0.0)),
                         io.StringIO(SEQ_HEADER))
    with pytest.raises(ValidationError, match="angle"):
        parse_encounters(io.StringIO(DEP_HEADER + dep_row(theta=7.0)),
                         io.StringIO(SEQ_HEADER))
    with pytest.raises(ValidationError, match="group size"):
        parse_encounters(io.StringIO(DEP_HEADER + dep_row()),
                         io.StringIO(SEQ_HEADER + seq_row(group=0)))
    with pytest.raises(ValidationError, match="duplicate"):
        parse_encounters(io.StringIO(DEP_HEADER + dep_row() + dep_row()),
                         io.StringIO(SEQ_HEADER))


def test_sightings_round_trip():
    text = HEADER + "".join([
        sighting_row(count=2, ts="2024-10-26T09:15:00+02:00"),
        sighting_row(tid="T002", species="roe_deer", count=7, x=-12.5),
    ])
    first = parse_sightings(io.StringIO(text))
    buf = io.StringIO()
    write_sightings_csv(first.records, buf)
    second = parse_sightings(io.StringIO(buf.getvalue()))
    assert second.records == first.records
    # serialization is canonical: a second round trip is byte-stable
    buf2 = io.StringIO()
    write_sightings_csv(second.records, buf2)
    assert buf2.getvalue() == buf.getvalue()


def test_encounters_round_trip():
    deps_text = DEP_HEADER + dep_row() + dep_row(cid="C02")
    seqs_text = SEQ_HEADER + seq_row() + seq_row(group=3)
    deps, seqs = parse_encounters(io.StringIO(deps_text),
                                  io.StringIO(seqs_text))
    dep_buf, seq_buf = io.StringIO(), io.StringIO()
    write_deployments_csv(deps, dep_buf)
    write_sequences_csv(seqs, seq_buf)
    deps2, seqs2 = parse_encounters(io.StringIO(dep_buf.getvalue()),
                                    io.StringIO(seq_buf.getvalue()))
    assert deps2 == deps
    assert seqs2 == seqs


def test_transect_counts_round_trip(tmp_path):
    counts = [TransectCount("T001", 0, 0.019), TransectCount("T002", 4, 0.021)]
    path = tmp_path / "counts.csv"
    write_transect_counts_csv(counts, path)
    assert read_transect_counts_csv(path) == counts


def test_launch_points_round_trip(tmp_path):
    from dronesurvey.data_io import (read_launch_points,
                                     write_launch_points_csv)
    from dronesurvey.geometry import PlanarPoint
    points = [PlanarPoint(700.0, 700.0), PlanarPoint(2100.0, 350.5)]
    path = tmp_path / "launches.csv"
    write_launch_points_csv(points, path)
    assert read_launch_points(path) == points


def test_launch_points_rejects_bad_rows():
    from dronesurvey.data_io import read_launch_points
    with pytest.raises(ValidationError, match="missing required column"):
        read_launch_points(io.StringIO("x_m\n1.0\n"))
    with pytest.raises(ValidationError, match="line 2"):
        read_launch_points(io.StringIO("x_m,y_m\nabc,2.0\n"))
    with pytest.raises(DegenerateInputError, match="no rows"):
        read_launch_points(io.StringIO("x_m,y_m\n"))
