import pytest

from enumstack.errors import InvalidModelCombination, RunIncomplete, ScenarioError
from enumstack.scenarios import (
    AccessOracle,
    LogRecord,
    MODEL_GRID,
    ScenarioConfig,
    assert_invariants,
    build_topology,
    builtin_config,
    canonical_events,
    parse_config,
    parse_events,
    run_events,
    value_flow,
)

SIP = '100 10 "u" "E2U+sip" "!^.*$!sip:alice@example.com!" .'


def run_model(model, events=None, seed=11):
    topology = build_topology(builtin_config(model), seed=seed)
    log = run_events(topology, events if events is not None else canonical_events())
    return topology, log


class TestConfig:
    def test_builtin_fixtures_cover_grid(self):
        for model, (kind, multiplicity) in MODEL_GRID.items():
            cfg = builtin_config(model)
            assert cfg.registrar_kind is kind
            assert cfg.registry_multiplicity == multiplicity

    def test_model_seven_rejected(self):
        with pytest.raises(InvalidModelCombination):
            builtin_config(7)

    def test_kind_contradiction_rejected(self):
        text = "[model]\nid = 2\nregistrar_kind = TSP\n[actors]\nregistries = R1\n"
        with pytest.raises(InvalidModelCombination):
            parse_config(text)

    def test_multiplicity_contradiction_rejected(self):
        with pytest.raises(InvalidModelCombination):
            ScenarioConfig(model_id=4, registries=("R1",))

    def test_tier0_must_point_at_known_registry(self):
        with pytest.raises(InvalidModelCombination):
            ScenarioConfig(
                model_id=1, registries=("R1",), tier0_entries={"1": ("R9",)}
            )

    def test_malformed_text_rejected(self):
        with pytest.raises(ScenarioError):
            parse_config("this is not an ini file [")

    def test_fault_plan_windows_applied(self):
        text = (
            "[model]\nid = 1\n"
            "[actors]\nusers = alice\ntsps = tsp1\nregistrars = reg1\nregistries = R1\n"
            "[tier0]\n1 = R1\n"
            "[faults]\nreg1 = 0:1000\n"
        )
        cfg = parse_config(text)
        assert cfg.fault_plan == (("reg1", 0, 1000),)
        topology = build_topology(cfg)
        log = run_events(
            topology,
            "step assign number=+13154434473 user=alice tsp=tsp1\n"
            "step subscribe number=+13154434473 user=alice registrar=reg1 token=auto\n",
        )
        assert log.records[-1].status == "HopTimeout"


class TestEventScripts:
    def test_parse_record_tail(self):
        events = parse_events(
            "step provision number=+13154434473 actor=alice "
            'record=100 10 "u" "E2U+sip" "!^.*$!sip:a@b!" .'
        )
        assert events[0].kind == "provision"
        assert events[0].args["record"].startswith("100 10")

    def test_comments_and_blank_lines_skipped(self):
        events = parse_events("# comment\n\nstep assign number=+123 user=u tsp=t\n")
        assert len(events) == 1

    def test_bad_line_rejected(self):
        with pytest.raises(ScenarioError):
            parse_events("do something")

    def test_unknown_event_logged_not_fatal(self):
        topology = build_topology(builtin_config(1))
        log = run_events(topology, "step frobnicate number=+123\n")
        assert log.records[-1].status == "UnknownEvent"

    def test_failing_event_logged_and_run_continues(self):
        script = (
            "step subscribe number=+13154434473 user=alice registrar=reg1 token=auto\n"
            "step assign number=+13154434473 user=alice tsp=tsp1\n"
        )
        topology = build_topology(builtin_config(1))
        log = run_events(topology, script)
        assert log.records[0].status == "NoPhoneService"
        assert log.records[1].status == "ok"


class TestDeterminism:
    def test_same_seed_byte_identical_logs(self):
        _, log_a = run_model(1, seed=99)
        _, log_b = run_model(1, seed=99)
        assert log_a.render_bytes() == log_b.render_bytes()

    def test_log_lines_parse_back(self):
        _, log = run_model(1)
        for line in log.render_lines():
            rec = LogRecord.parse(line)
            assert rec.render() == line


class TestTransparency:
    def test_resolution_identical_across_all_models(self):
        answers = {}
        for model in MODEL_GRID:
            _, log = run_model(model)
            answers[model] = [
                (r.detail["number"], r.detail["service"], r.detail["uris"])
                for r in log.records
                if r.kind == "resolve" and r.ok
            ]
            assert answers[model], f"model {model} resolved nothing"
        baseline = answers[1]
        for model, uris in answers.items():
            assert uris == baseline, f"model {model} diverged"


class TestValueFlow:
    def test_model1_flow(self):
        topology, _ = run_model(1)
        pairs = value_flow(topology).role_pairs()
        assert pairs == {("User", "TSP"), ("ASP", "TSP"), ("TSP", "Registry")}

    def test_model2_flow(self):
        topology, _ = run_model(2)
        pairs = value_flow(topology).role_pairs()
        assert pairs == {("User", "ASP"), ("ASP", "Registry")}

    def test_model3_flow(self):
        topology, _ = run_model(3)
        pairs = value_flow(topology).role_pairs()
        assert pairs == {
            ("User", "IndependentRegistrar"),
            ("IndependentRegistrar", "Registry"),
        }

    def test_model6_flow_charges_registrars_not_users(self):
        topology, _ = run_model(6)
        pairs = value_flow(topology).role_pairs()
        assert ("IndependentRegistrar", "Registry") in pairs
        assert ("User", "Registry") not in pairs

    def test_model4_same_flow_as_model1(self):
        one, _ = run_model(1)
        four, _ = run_model(4)
        assert value_flow(one).role_pairs() == value_flow(four).role_pairs()

    def test_cooperation_side_payment_in_asp_models(self):
        script = canonical_events() + "step cooperate payer=reg1 tsp=tsp1 approach=User-directed\n"
        topology, log = run_model(2, script)
        assert ("ASP", "TSP") in value_flow(topology).role_pairs()

    def test_cooperation_rejected_elsewhere(self):
        script = canonical_events() + "step cooperate payer=reg1 tsp=tsp1\n"
        topology, log = run_model(3, script)
        assert log.records[-1].status == "InvalidModelCombination"
        assert ("IndependentRegistrar", "TSP") not in value_flow(topology).role_pairs()

    def test_transfer_fee_edge(self):
        script = canonical_events() + "step transfer number=+13154434473 user=alice to=reg2\n"
        topology, _ = run_model(1, script)
        edges = value_flow(topology).edges
        transfer_edges = [e for e in edges if e.cause == topology.log[-1].event_id]
        assert [(e.payer, e.payee) for e in transfer_edges] == [("reg2", "R1")]

    def test_requires_completed_run(self):
        topology = build_topology(builtin_config(1))
        with pytest.raises(RunIncomplete):
            value_flow(topology)

    def test_every_edge_traces_to_event(self):
        topology, log = run_model(1)
        ids = {rec.event_id for rec in log.records}
        for edge in value_flow(topology).edges:
            assert edge.cause in ids
            assert edge.amount >= 0


class TestInvariants:
    def test_clean_run_passes_everything(self):
        for model in MODEL_GRID:
            topology, _ = run_model(model)
            report = assert_invariants(topology)
            assert report.passed, f"model {model}: {report.render_lines()}"

    def test_planted_violation_caught_with_event_id(self):
        topology, _ = run_model(1)
        topology.backdoor_provision("reg1", "+13154434473", SIP, actor="mallory")
        report = assert_invariants(topology)
        result = report.result("access_soundness")
        assert not result.passed
        planted_id = topology.log[-1].event_id
        assert any(planted_id in v for v in result.violations)

    def test_peering_fault_breaks_convergence(self):
        script = (
            "step assign number=+13154434473 user=alice tsp=tsp1\n"
            "step offline actor=R2\n"
            "step subscribe number=+13154434473 user=alice registrar=reg1 token=auto\n"
        )
        topology, _ = run_model(4, script)
        report = assert_invariants(topology)
        assert not report.result("replica_convergence").passed

    def test_single_registry_models_never_peer(self):
        for model in (1, 2, 3):
            topology, _ = run_model(model)
            report = assert_invariants(topology)
            assert report.result("peering_inert").passed

    def test_multi_registry_models_do_peer(self):
        from enumstack.wire import PEER_UPDATE

        topology, _ = run_model(4)
        count = sum(1 for r in topology.net.frame_log if r.frame.kind == PEER_UPDATE)
        assert count > 0

    def test_orphaned_records_after_old_registrar_outage_reported(self):
        script = canonical_events() + (
            "step offline actor=reg1\n"
            "step transfer number=+13154434473 user=alice to=reg2\n"
        )
        topology, log = run_model(1, script)
        transfer = [r for r in log.records if r.kind == "transfer"][-1]
        assert transfer.detail["state"] == "Complete"
        assert "unreachable" in transfer.detail["warnings"]
        report = assert_invariants(topology)
        # the old registrar still holds the records it could not hand over
        assert not report.result("single_store").passed


class TestAccessOracle:
    def test_oracle_agrees_with_clean_run(self):
        topology, log = run_model(1)
        assert AccessOracle(topology.cfg).check(log.records) == []

    def test_oracle_is_time_ordered(self):
        # provision after revoke must be denied; the log then carries an
        # error record which the oracle ignores, and no violation appears.
        script = canonical_events() + (
            "step revoke number=+13154434473 user=alice grant=g1\n"
            'step provision number=+13154434473 actor=asp1 record=104 10 "u" "E2U+mailto" "!^.*$!mailto:x@y!" .\n'
        )
        topology, log = run_model(1, script)
        assert log.records[-1].status == "AccessDenied"
        assert AccessOracle(topology.cfg).check(log.records) == []


class TestStateHash:
    def test_resolve_events_do_not_change_state(self):
        topology, _ = run_model(1)
        before = topology.state_hash()
        topology.resolve("+13154434473", "E2U+sip")
        topology.resolve("+13154434473", "*")
        assert topology.state_hash() == before

    def test_mutation_changes_state(self):
        topology, _ = run_model(1)
        before = topology.state_hash()
        topology.provision(
            "+13154434473", "alice",
            '120 10 "u" "E2U+tel" "!^.*$!tel:+13154434473!" .',
        )
        assert topology.state_hash() != before
