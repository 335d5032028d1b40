import json
import logging
import os

import pytest

from crch.ingest import (FAMILIES, DaxParseError, GeneratorConfig, IngestError, SchemaError,
                         emit_native, generate, load_workflow, parse_dax, parse_native)
from crch.model import ValidationError, mean_runtime, validate

from conftest import DATA


def read(name, mode="rb"):
    with open(os.path.join(DATA, name), mode) as fh:
        return fh.read()


def test_f1_native(f1):
    assert f1.workflow.ids == ("t1", "t2", "t3")
    assert mean_runtime(f1.workflow.by_id["t1"]) == 2.5
    assert f1.pool.reliable == frozenset({"v2"})


def test_native_round_trip_is_byte_identical():
    raw = read("f1.json")
    assert emit_native(parse_native(raw)) == raw


def test_generated_round_trip():
    spec = generate(GeneratorConfig("montage-like", 30, 5, 2, seed=3))
    raw = emit_native(spec)
    again = parse_native(raw)
    assert emit_native(again) == raw
    assert again.workflow == spec.workflow
    assert again.pool == spec.pool


def test_runtime_row_length_mismatch_names_key():
    doc = json.loads(read("f1.json"))
    doc["tasks"][1]["runtimes"] = [1.0]
    with pytest.raises(SchemaError) as ei:
        parse_native(json.dumps(doc))
    assert ei.value.key == "tasks[1].runtimes"


@pytest.mark.parametrize("mutate,key", [
    (lambda d: d.pop("vms"), "vms"),
    (lambda d: d["rates"].pop(), "rates"),
    (lambda d: d["tasks"][0].pop("id"), "tasks[0].id"),
    (lambda d: d["deps"][0].__setitem__("data", "lots"), "deps[0].data"),
    (lambda d: d["vms"][0].__setitem__("reliable", "yes"), "vms[0].reliable"),
])
def test_schema_errors(mutate, key):
    doc = json.loads(read("f1.json"))
    mutate(doc)
    with pytest.raises(SchemaError) as ei:
        parse_native(json.dumps(doc))
    assert ei.value.key == key


def test_invalid_json():
    with pytest.raises(SchemaError):
        parse_native(b"{not json")


def test_native_cycle_is_validation_error():
    doc = json.loads(read("f1.json"))
    doc["deps"].append({"parent": "t3", "child": "t1", "data": 1.0})
    with pytest.raises(ValidationError):
        parse_native(json.dumps(doc))


def test_dax_two_jobs_field_by_field(caplog):
    res = json.loads(read("two_jobs_resources.json"))
    with caplog.at_level(logging.WARNING):
        spec = parse_dax(read("two_jobs.dax"), res, name="pair")
    wf = spec.workflow
    assert wf.ids == ("ID01", "ID02")
    assert wf.by_id["ID01"].runtimes == (5.0, 20.0)
    assert wf.by_id["ID02"].runtimes == (2.0, 8.0)
    assert len(wf.deps) == 1
    d = wf.deps[0]
    assert (d.parent, d.child, d.data) == ("ID01", "ID02", 30.0)
    assert spec.pool.vms == ("fast", "slow")
    assert spec.pool.reliable == frozenset({"fast"})
    assert spec.pool.transfer_time(30.0, "fast", "slow") == 3.0
    assert any("argument" in r.getMessage() for r in caplog.records)


def test_dax_default_resources_are_seeded():
    a = parse_dax(read("two_jobs.dax"), seed=5, vm_count=3)
    b = parse_dax(read("two_jobs.dax"), seed=5, vm_count=3)
    assert a.workflow == b.workflow
    speeds = [r / 10.0 for r in a.workflow.by_id["ID01"].runtimes]
    assert all(0.5 <= s < 1.5 for s in speeds)


def test_dax_zero_jobs():
    with pytest.raises(ValidationError) as ei:
        parse_dax(b'<adag xmlns="http://pegasus.isi.edu/schema/DAX"></adag>')
    assert "no entry task" in str(ei.value)


def test_dax_undeclared_parent():
    xml = b'<adag><job id="a" runtime="1"/><child ref="a"><parent ref="ghost"/></child></adag>'
    with pytest.raises(IngestError, match="ghost"):
        parse_dax(xml)


def test_dax_malformed_reports_line():
    xml = b'<adag>\n<job id="a" runtime="1">\n</adag>'
    with pytest.raises(DaxParseError) as ei:
        parse_dax(xml)
    assert ei.value.line == 3


def test_load_workflow_dispatch(tmp_path):
    spec = load_workflow(os.path.join(DATA, "two_jobs.dax"),
                         resources=os.path.join(DATA, "two_jobs_resources.json"))
    assert spec.name == "two_jobs"
    assert load_workflow(os.path.join(DATA, "f1.json")).name == "f1"


def test_generate_deterministic():
    cfg = GeneratorConfig("layered-random", 100, seed=7)
    assert emit_native(generate(cfg)) == emit_native(generate(cfg))


@pytest.mark.parametrize("family", FAMILIES)
def test_generate_families_valid(family):
    spec = generate(GeneratorConfig(family, 100, vm_count=20, seed=1))
    assert len(spec.workflow.tasks) == 100
    assert validate(spec.workflow, spec.pool).ok
    assert len(spec.pool.reliable) == 4


def test_generate_single_task():
    spec = generate(GeneratorConfig("montage-like", 1, vm_count=3, reliable=1))
    assert len(spec.workflow.tasks) == 1
    assert spec.workflow.deps == ()


def test_family_contrasts():
    base = generate(GeneratorConfig("layered-random", 200, seed=2))
    ligo = generate(GeneratorConfig("ligo-like", 200, seed=2))
    cyber = generate(GeneratorConfig("cybershake-like", 200, seed=2))

    def mean_w(s):
        return sum(mean_runtime(t) for t in s.workflow.tasks) / len(s.workflow.tasks)

    def mean_d(s):
        return sum(d.data for d in s.workflow.deps) / len(s.workflow.deps)

    assert mean_w(ligo) > 2.5 * mean_w(base)
    assert mean_d(cyber) > 2.5 * mean_d(base)


def test_montage_is_wide():
    spec = generate(GeneratorConfig("montage-like", 100, seed=1))
    fan = max(len(spec.workflow.parents[t]) for t in spec.workflow.ids)
    assert fan >= 5


def test_bad_generator_config():
    with pytest.raises(ValueError):
        GeneratorConfig("pegasus", 10)
    with pytest.raises(ValueError):
        GeneratorConfig("montage-like", 0)
