from __future__ import annotations

import ipaddress
import json

import jsonschema
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from swforge import trace as tracefile
from swforge.netsim import Filtering
from swforge.provisioning.stable import StableStore
from swforge.scenario import NAMED, Simulation, UsageError, load, override, run
from swforge.scenario.cli import main
from swforge.scenario.config import from_dict
from swforge.wire.ip import Af


@pytest.fixture(scope="module")
def reports():
    return {sid: run(load(sid)) for sid in NAMED}


def test_schema_is_valid_draft():
    jsonschema.Draft202012Validator.check_schema(tracefile.schema())


class TestConfig:
    def test_builtin_files_carry_seeds(self):
        for sid in NAMED:
            cfg = load(sid)
            assert cfg.id == sid and cfg.payload_af is not cfg.transport_af

    def test_router_iff_delegation(self):
        for sid in NAMED:
            cfg = load(sid)
            assert cfg.router == (sid[-1] in "24")

    def test_unknown_scenario(self):
        with pytest.raises(UsageError):
            load("3.3.1")

    def test_seed_mandatory(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text(json.dumps({"id": "custom"}))
        with pytest.raises(UsageError):
            load(path)

    def test_named_needs_distinct_families(self):
        with pytest.raises(UsageError):
            from_dict({"id": "3.1.1", "transport_af": "v6", "payload_af": "v6"})

    def test_custom_allows_same_family(self):
        cfg = from_dict({"id": "custom", "transport_af": "v6", "payload_af": "v6", "seed": 1})
        assert cfg.payload_af is Af.IPV6

    def test_unknown_field(self):
        with pytest.raises(UsageError):
            from_dict({"seed": 1, "colour": "blue"})

    def test_override_keeps_original(self):
        cfg = load("3.1.1")
        other = override(cfg, seed=99, nat=None)
        assert other.seed == 99 and cfg.seed == 311


class TestRuns:
    @pytest.mark.parametrize("sid", NAMED)
    def test_default_exit_zero(self, reports, sid):
        r = reports[sid]
        assert r.exit_code == 0, (r.step, r.detail)

    @pytest.mark.parametrize("sid", NAMED)
    def test_behind_eif_nat(self, sid):
        r = run(override(load(sid), nat="eif"))
        assert r.exit_code == 0, (r.step, r.detail)

    def test_3_1_1_only_default_route(self, reports):
        assert reports["3.1.1"].routes["si"] == [{"prefix": "::/0", "next_hop": "softwire", "origin": "default"}]

    def test_3_1_2_delegation(self, reports):
        r = reports["3.1.2"]
        rec = r.records[0]
        assert rec["delegated_v6"]["prefix"] == "2001:db8:100::/48"
        assert {"prefix": "2001:db8:100::/48", "next_hop": "sw1", "origin": "delegated"} in r.routes["lns"]
        assert ipaddress.ip_address(rec["endpoint_v6"]["address"]) in ipaddress.ip_network(rec["link_prefix_v6"])

    def test_3_2_1_host_address(self, reports):
        r = reports["3.2.1"]
        assert r.records[0]["endpoint_v4"]["address"] == "192.0.2.77"
        assert "delegated_v4" not in r.records[0]
        assert [x["prefix"] for x in r.routes["lns"]] == ["192.0.2.77/32"]

    @pytest.mark.parametrize("sid", NAMED)
    def test_wrong_af_rejected(self, reports, sid):
        w = reports[sid].wrong_af
        assert w["rejected"] and w["counted"] == 1
        assert w["af"] == load(sid).transport_af.label

    def test_correct_af_counted(self, reports):
        stats = reports["3.1.1"].stats["si"]
        assert stats["v6_packets_out"] >= 10 and stats["v4_packets_out"] == 0

    def test_traffic_counts_match_both_ends(self, reports):
        for r in reports.values():
            si, sc = r.stats["si"], r.stats["lns"]
            for af in ("v4", "v6"):
                assert si[f"{af}_octets_out"] == sc[f"{af}_octets_in"]
                assert sc[f"{af}_octets_out"] == si[f"{af}_octets_in"]

    def test_failing_step_named(self):
        base = load("3.1.1")
        aaa = {"users": {"cpe": {"secret": "right"}}}
        cfg = override(base, aaa=aaa, user=type(base.user)("cpe", "wrong"))
        r = run(cfg)
        assert r.exit_code == 1 and r.step == "ppp"

    def test_failed_ppp_still_accounted(self):
        base = load("3.1.1")
        cfg = override(base, aaa={"users": {"cpe": {"secret": "right"}}}, user=type(base.user)("cpe", "wrong"), teardown=True)
        sim = Simulation(cfg)
        sim.run()
        sim.run_for(120)
        kinds = [r.kind.value for r in sim.accounting.records]
        assert kinds == ["Start", "Stop"]

    def test_teardown_emits_stop(self):
        r = run(override(load("3.2.2"), teardown=True))
        assert r.exit_code == 0
        assert [a["kind"] for a in r.accounting] == ["Start", "Stop"]
        # routes withdrawn after teardown
        assert r.routes["lns"] == []


class TestTrace:
    @pytest.mark.parametrize("sid", NAMED)
    def test_lines_validate(self, tmp_path, sid):
        path = tmp_path / "t.jsonl"
        run(override(load(sid), nat="apdf", teardown=True), trace_path=path)
        validator = jsonschema.Draft202012Validator(tracefile.schema())
        for line in tracefile.load(path):
            validator.validate(line)

    def test_failure_trace_validates(self, tmp_path):
        path = tmp_path / "t.jsonl"
        r = run(override(load("3.1.1"), nat="adf", respond_from_alternate=True), trace_path=path)
        assert r.exit_code == 1
        validator = jsonschema.Draft202012Validator(tracefile.schema())
        events = tracefile.load(path)
        for line in events:
            validator.validate(line)
        assert any(e["event"] == "nat_filtered" for e in events)

    def test_time_monotonic(self, tmp_path):
        path = tmp_path / "t.jsonl"
        run(load("3.1.4"), trace_path=path)
        times = [e["t_us"] for e in tracefile.load(path)]
        assert times == sorted(times)


class TestStable:
    def test_reconnect_gets_same(self, tmp_path):
        store = StableStore(tmp_path / "stable.jsonl")
        first = Simulation(override(load("3.1.4"), teardown=True), store=store).run()
        second = Simulation(override(load("3.1.4"), seed=7), store=StableStore(tmp_path / "stable.jsonl")).run()
        for key in ("link_prefix_v6", "delegated_v6"):
            assert first.records[0][key] == second.records[0][key]

    def test_temporary_policy_forgets(self, tmp_path):
        path = tmp_path / "stable.jsonl"
        Simulation(load("3.2.3"), store=StableStore(path)).run()
        store = StableStore(path, "temporary")
        r = Simulation(load("3.2.3"), store=store).run()
        assert r.exit_code == 0
        assert store.lookup("cpe", "lns") is None


class TestCli:
    def test_validate_table_cell(self, capsys):
        assert main(["validate", "v6", "global", "ula"]) == 0
        assert capsys.readouterr().out.splitlines()[0] == "Possible, but Not Recommended"

    def test_validate_bad_scope(self, capsys):
        assert main(["validate", "v6", "site-local", "ula"]) == 2

    def test_unknown_id(self, capsys):
        assert main(["run", "3.9.9"]) == 2

    def test_bad_nat(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["run", "3.1.1", "--nat", "full-cone"])
        assert exc.value.code == 2

    def test_run_failure_exit_one(self, capsys):
        assert main(["run", "3.1.1", "--nat", "apdf", "--respond-from-alternate"]) == 1
        assert "step l2tp" in capsys.readouterr().out

    def test_stats_matches_stop(self, tmp_path, capsys):
        path = tmp_path / "t.jsonl"
        assert main(["run", "3.1.1", "--trace", str(path), "--teardown"]) == 0
        capsys.readouterr()
        assert main(["stats", "--trace", str(path)]) == 0
        out = capsys.readouterr().out.splitlines()
        summed = int(next(line for line in out if line.startswith("lns v6_octets_out")).split()[-1])
        stop = next(line for line in out if line.startswith("accounting Stop"))
        assert f"v6_octets_out={summed}" in stop.split()

    def test_routes_after_3_1_1(self, tmp_path, capsys):
        path = tmp_path / "t.jsonl"
        main(["run", "3.1.1", "--trace", str(path)])
        capsys.readouterr()
        assert main(["routes", "--trace", str(path)]) == 0
        out = capsys.readouterr().out
        si_block = out.split("lns:")[0]
        assert "::/0" in si_block and "delegated" not in si_block and "lan" not in si_block

    def test_missing_trace(self, tmp_path, capsys):
        assert main(["stats", "--trace", str(tmp_path / "nope.jsonl")]) == 2
        assert main(["routes", "--trace", str(tmp_path / "nope.jsonl")]) == 2

    def test_json_report(self, capsys):
        assert main(["run", "3.2.4", "--json"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["exit_code"] == 0 and report["records"][0]["delegated_v4"]["prefix"].endswith("/28")

    def test_list(self, capsys):
        assert main(["list"]) == 0
        assert len(capsys.readouterr().out.splitlines()) == 8


MODES = [None, Filtering.EndpointIndependent, Filtering.AddressDependent, Filtering.AddressAndPortDependent]


@settings(max_examples=8, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(0, 2**16), st.booleans())
def test_filtering_monotonic(seed, alternate):
    # whatever APDF lets through, ADF does too, and EIF too
    ok = []
    for mode in MODES[1:][::-1]:
        r = run(override(load("3.1.1"), seed=seed, nat=mode, respond_from_alternate=alternate))
        ok.append(r.exit_code == 0)
    apdf, adf, eif = ok
    assert (not apdf or adf) and (not adf or eif)
