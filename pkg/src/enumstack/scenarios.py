"""Administration-model scenarios: topologies, scripted runs, invariants.

Six reference models form a 2x3 grid: the registrar kind (TSP / ASP /
independent) crossed with registry multiplicity (single / multiple).
Models 1-3 run one registry; models 4-6 run several with owner-push
replication between them. A scenario file (INI sections: model, actors,
tier0, accreditation, homes, fees, access, faults) builds a running
topology on the deterministic simulator; an event script drives it; the
log is replayable and byte-identical for identical (config, seed,
events).

The invariant suite re-derives everything it checks from the run log and
raw actor state rather than trusting the code paths that produced them:
access soundness replays grants through an independent matrix, billing
recounts charged events, transfer conservation compares record multisets,
and replication is checked serial-by-serial.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field
from importlib.resources import files as resource_files

from . import resolver as resolver_mod
from .e164 import ApexConfig, parse_number
from .errors import (
    EnumInactive,
    EnumStackError,
    HopTimeout,
    InvalidModelCombination,
    InvalidRecord,
    NaptrError,
    RunIncomplete,
    ScenarioError,
    UnknownSubscription,
)
from .naptr import (
    NaptrRecord,
    NaptrRecordSet,
    ServiceSelector,
    Visibility,
    resolve_record_set,
)
from .registrar import (
    Directory,
    ModelContext,
    Party,
    RegistrarActor,
    Role,
    TransferState,
    parse_store_lines,
    render_store_lines,
    render_stored_line,
)
from .registry import (
    RegistryActor,
    RegistryState,
    Tier0Actor,
    Tier0Table,
    replicas_converged,
)
from .simulator import Network
from .wire import (
    DISCONNECT,
    GET,
    GRANT,
    PEER_UPDATE,
    PROVISION,
    REVOKE,
    SUBSCRIBE,
    TRANSFER_DISPUTE,
    TRANSFER_INIT,
    _escape,
    _unescape,
)

MODEL_GRID: dict[int, tuple[Role, str]] = {
    1: (Role.TSP, "single"),
    2: (Role.ASP, "single"),
    3: (Role.INDEPENDENT, "single"),
    4: (Role.TSP, "multiple"),
    5: (Role.ASP, "multiple"),
    6: (Role.INDEPENDENT, "multiple"),
}

_KIND_NAMES = {
    "TSP": Role.TSP,
    "ASP": Role.ASP,
    "Independent": Role.INDEPENDENT,
    "IndependentRegistrar": Role.INDEPENDENT,
    "ISP": Role.ISP,
}


@dataclass(frozen=True)
class ScenarioConfig:
    """One administration model as an executable topology description."""

    model_id: int
    users: tuple[str, ...] = ()
    tsps: tuple[str, ...] = ()
    asps: tuple[str, ...] = ()
    registrar_ids: tuple[str, ...] = ()
    registries: tuple[str, ...] = ()
    tier0_entries: dict[str, tuple[str, ...]] = field(default_factory=dict)
    accreditation: dict[str, frozenset[str]] = field(default_factory=dict)
    homes: dict[str, str] = field(default_factory=dict)
    flat_fee: float = 1.0
    user_fee: float = 1.0
    network_related: frozenset[str] = frozenset({"E2U+sip", "E2U+tel"})
    extra_registrar_kinds: tuple[Role, ...] = ()
    fault_plan: tuple[tuple[str, int, int], ...] = ()
    apex: str = "e164.arpa"

    def __post_init__(self) -> None:
        if self.model_id not in MODEL_GRID:
            raise InvalidModelCombination(f"model id {self.model_id} not in 1..6")
        multiplicity = self.registry_multiplicity
        if multiplicity == "single" and len(self.registries) != 1:
            raise InvalidModelCombination(
                f"model {self.model_id} is single-registry but config lists "
                f"{len(self.registries)}"
            )
        if multiplicity == "multiple" and len(self.registries) < 2:
            raise InvalidModelCombination(
                f"model {self.model_id} needs at least two registries"
            )
        for prefix, regs in self.tier0_entries.items():
            for reg in regs:
                if reg not in self.registries:
                    raise InvalidModelCombination(
                        f"tier0 prefix {prefix!r} points at unknown registry {reg!r}"
                    )
        for registrar, home in self.homes.items():
            if home not in self.registries:
                raise InvalidModelCombination(
                    f"registrar {registrar!r} home {home!r} is not a registry"
                )

    @property
    def registrar_kind(self) -> Role:
        return MODEL_GRID[self.model_id][0]

    @property
    def registry_multiplicity(self) -> str:
        return MODEL_GRID[self.model_id][1]

    @property
    def actors(self) -> tuple[Party, ...]:
        parties: dict[str, Party] = {}
        for uid in self.users:
            parties[uid] = Party(uid, Role.USER)
        for tid in self.tsps:
            parties[tid] = Party(tid, Role.TSP)
        for aid in self.asps:
            parties[aid] = Party(aid, Role.ASP)
        for rid in self.registrar_ids:
            parties.setdefault(rid, Party(rid, self.registrar_kind))
        for gid in self.registries:
            parties[gid] = Party(gid, Role.REGISTRY)
        return tuple(parties.values())

    def party_role(self, party_id: str) -> str:
        for party in self.actors:
            if party.id == party_id:
                return party.role.value
        return "?"

    def home_of(self, registrar: str) -> str:
        if registrar in self.homes:
            return self.homes[registrar]
        for registry in self.registries:
            if registrar in self.accreditation.get(registry, frozenset()):
                return registry
        return self.registries[0]


def _split_list(raw: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in raw.split(",") if part.strip())


def parse_config(text: str) -> ScenarioConfig:
    """Parse a scenario config document (INI sections)."""
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ScenarioError(f"bad scenario config: {exc}") from exc
    if not parser.has_section("model") or not parser.has_option("model", "id"):
        raise ScenarioError("scenario config needs [model] id")
    try:
        model_id = parser.getint("model", "id")
    except ValueError as exc:
        raise ScenarioError(f"bad model id: {exc}") from exc
    if model_id not in MODEL_GRID:
        raise InvalidModelCombination(f"model id {model_id} not in 1..6")

    # Explicit kind/multiplicity may restate the grid but not contradict it.
    kind, multiplicity = MODEL_GRID[model_id]
    if parser.has_option("model", "registrar_kind"):
        stated = _KIND_NAMES.get(parser.get("model", "registrar_kind").strip())
        if stated is not kind:
            raise InvalidModelCombination(
                f"model {model_id} implies registrar kind {kind.value}"
            )
    if parser.has_option("model", "registry_multiplicity"):
        if parser.get("model", "registry_multiplicity").strip() != multiplicity:
            raise InvalidModelCombination(
                f"model {model_id} implies {multiplicity} registry multiplicity"
            )

    extra_kinds: list[Role] = []
    if parser.has_option("model", "extra_kinds"):
        for name in _split_list(parser.get("model", "extra_kinds")):
            role = _KIND_NAMES.get(name)
            if role is None:
                raise ScenarioError(f"unknown registrar kind {name!r}")
            extra_kinds.append(role)

    def actor_list(option: str) -> tuple[str, ...]:
        if parser.has_option("actors", option):
            return _split_list(parser.get("actors", option))
        return ()

    tier0_entries = {}
    if parser.has_section("tier0"):
        for prefix, value in parser.items("tier0"):
            tier0_entries[prefix] = _split_list(value)

    accreditation = {}
    if parser.has_section("accreditation"):
        for registry, value in parser.items("accreditation"):
            # configparser lowercases keys; registry ids keep their case
            # from the [actors] section, so match case-insensitively.
            accreditation[registry] = frozenset(_split_list(value))

    homes = {}
    if parser.has_section("homes"):
        for registrar, value in parser.items("homes"):
            homes[registrar] = value.strip()

    registries = actor_list("registries")
    id_map = {name.lower(): name for name in registries}
    tier0_entries = {
        prefix: tuple(id_map.get(r.lower(), r) for r in regs)
        for prefix, regs in tier0_entries.items()
    }
    accreditation = {
        id_map.get(reg.lower(), reg): members for reg, members in accreditation.items()
    }
    homes = {
        registrar: id_map.get(home.lower(), home) for registrar, home in homes.items()
    }

    def fee(option: str, default: float) -> float:
        if parser.has_option("fees", option):
            return parser.getfloat("fees", option)
        return default

    network_related = frozenset({"E2U+sip", "E2U+tel"})
    if parser.has_option("access", "network_related"):
        network_related = frozenset(_split_list(parser.get("access", "network_related")))

    fault_plan: list[tuple[str, int, int]] = []
    if parser.has_section("faults"):
        for actor, value in parser.items("faults"):
            start_text, sep, end_text = value.partition(":")
            if not sep:
                raise ScenarioError(f"fault window {value!r} is not start:end")
            fault_plan.append((actor, int(start_text), int(end_text)))

    apex = "e164.arpa"
    if parser.has_option("model", "apex"):
        apex = parser.get("model", "apex").strip()

    return ScenarioConfig(
        model_id=model_id,
        users=actor_list("users"),
        tsps=actor_list("tsps"),
        asps=actor_list("asps"),
        registrar_ids=actor_list("registrars"),
        registries=registries,
        tier0_entries=tier0_entries,
        accreditation=accreditation,
        homes=homes,
        flat_fee=fee("flat_fee", 1.0),
        user_fee=fee("user_fee", 1.0),
        network_related=network_related,
        extra_registrar_kinds=tuple(extra_kinds),
        fault_plan=tuple(fault_plan),
        apex=apex,
    )


def load_config(path: str) -> ScenarioConfig:
    with open(path, encoding="utf-8") as handle:
        return parse_config(handle.read())


def builtin_config(model_id: int, apex: str | None = None) -> ScenarioConfig:
    """One of the six shipped scenario fixtures."""
    if model_id not in MODEL_GRID:
        raise InvalidModelCombination(f"model id {model_id} not in 1..6")
    text = (
        resource_files("enumstack")
        .joinpath(f"fixtures/scenarios/model{model_id}.cfg")
        .read_text(encoding="utf-8")
    )
    cfg = parse_config(text)
    if apex:
        cfg = ScenarioConfig(
            **{**cfg.__dict__, "apex": apex}  # type: ignore[arg-type]
        )
    return cfg


def canonical_events() -> str:
    """The shipped model-agnostic event script."""
    return (
        resource_files("enumstack")
        .joinpath("fixtures/canonical.events")
        .read_text(encoding="utf-8")
    )


# ---------------------------------------------------------------- run log


@dataclass
class LogRecord:
    """One structured, replayable log line."""

    event_id: str
    tick: int
    kind: str
    status: str
    detail: dict[str, str] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def render(self) -> str:
        detail = ";".join(f"{k}={_escape(v)}" for k, v in self.detail.items())
        return f"{self.event_id}|t{self.tick}|{self.kind}|{self.status}|{detail}"

    @classmethod
    def parse(cls, line: str) -> "LogRecord":
        parts = line.split("|", 4)
        if len(parts) != 5 or not parts[1].startswith("t"):
            raise ScenarioError(f"bad log line {line!r}")
        detail: dict[str, str] = {}
        if parts[4]:
            for chunk in parts[4].split(";"):
                key, sep, value = chunk.partition("=")
                if not sep:
                    raise ScenarioError(f"bad log detail {chunk!r}")
                detail[key] = _unescape(value)
        return cls(
            event_id=parts[0],
            tick=int(parts[1][1:]),
            kind=parts[2],
            status=parts[3],
            detail=detail,
        )


@dataclass
class EventLog:
    records: list[LogRecord]

    def render_lines(self) -> list[str]:
        return [rec.render() for rec in self.records]

    def render_bytes(self) -> bytes:
        return ("\n".join(self.render_lines()) + "\n").encode("utf-8")


# ---------------------------------------------------------------- topology


def _status_error(status: str, message: str) -> EnumStackError:
    from . import errors as errors_mod

    exc_type = getattr(errors_mod, status, None)
    if isinstance(exc_type, type) and issubclass(exc_type, EnumStackError):
        return exc_type(message)
    return EnumStackError(f"{status}: {message}")


class Topology:
    """A running scenario: actors on the simulator plus the run log."""

    def __init__(self, cfg: ScenarioConfig, seed: int = 0):
        self.cfg = cfg
        self.seed = seed
        self.net = Network(seed=seed)
        self.apex = ApexConfig(cfg.apex)
        self.directory = Directory()
        self.log: list[LogRecord] = []
        self.completed = False
        self._event_n = 0
        self._grant_n = 0
        self._transfer_n = 0
        self._transfer_host: dict[str, str] = {}

        table = Tier0Table(
            entries={p: tuple(r) for p, r in cfg.tier0_entries.items()},
            apex=self.apex,
        )
        self.tier0 = Tier0Actor("tier0", table)
        self.net.register(self.tier0.actor_id, self.tier0.handle_frame)

        self.registries: dict[str, RegistryActor] = {}
        multiple = cfg.registry_multiplicity == "multiple"
        for reg_id in cfg.registries:
            served = tuple(
                prefix for prefix, regs in cfg.tier0_entries.items() if reg_id in regs
            )
            peers = tuple(r for r in cfg.registries if r != reg_id) if multiple else ()
            accredited = cfg.accreditation.get(reg_id, frozenset(cfg.registrar_ids))
            state = RegistryState(
                id=reg_id,
                served_prefixes=served,
                peers=peers,
                accredited=accredited,
                flat_fee=cfg.flat_fee,
            )
            actor = RegistryActor(state)
            self.registries[reg_id] = actor
            self.net.register(reg_id, actor.handle_frame)

        self.ctx = ModelContext(
            model_id=cfg.model_id,
            registrar_kind=cfg.registrar_kind,
            extra_kinds=frozenset(cfg.extra_registrar_kinds),
            network_related=cfg.network_related,
            user_fee=cfg.user_fee,
            flat_fee=cfg.flat_fee,
            accreditation=dict(cfg.accreditation),
            apex=self.apex,
        )
        self.registrars: dict[str, RegistrarActor] = {}
        for registrar_id in cfg.registrar_ids:
            actor = RegistrarActor(
                registrar_id=registrar_id,
                kind=cfg.registrar_kind,
                home_registry=cfg.home_of(registrar_id),
                ctx=self.ctx,
                directory=self.directory,
            )
            self.registrars[registrar_id] = actor
            self.net.register(registrar_id, actor.handle_frame)

        for actor_id, start, end in cfg.fault_plan:
            self.net.add_fault_window(actor_id, start, end)

    # ------------------------------------------------------------ plumbing

    def _next_event_id(self) -> str:
        self._event_n += 1
        return f"e{self._event_n}"

    def _append(self, event_id: str, kind: str, status: str, detail: dict[str, str]) -> None:
        self.log.append(
            LogRecord(
                event_id=event_id,
                tick=self.net.clock,
                kind=kind,
                status=status,
                detail=detail,
            )
        )

    def _run_op(self, kind: str, detail: dict[str, str], fn, number: str | None = None):
        """Run an operation and log ok/err; errors re-raise for direct callers.

        Everything that can fail, including parsing the number itself,
        happens inside the logged region so scripts record their own
        mistakes instead of aborting.
        """
        event_id = self._next_event_id()
        detail = ({"number": number, **detail}) if number is not None else dict(detail)
        try:
            if number is not None:
                digits = parse_number(number).full_digits
                detail["number"] = digits
                result = fn(event_id, digits)
            else:
                result = fn(event_id)
        except EnumStackError as exc:
            detail["message"] = str(exc)
            self._append(event_id, kind, type(exc).__name__, detail)
            raise
        merged = {**detail, **(result if isinstance(result, dict) else {})}
        self._append(event_id, kind, "ok", merged)
        return merged

    def _serving(self, digits: str) -> str:
        sub = self.directory.get(digits)
        if sub is None:
            raise UnknownSubscription(f"no subscription for {digits!r}")
        if not sub.serving_registrar:
            raise EnumInactive(f"{digits!r} has no serving registrar")
        return sub.serving_registrar

    def _request(self, src: str, dst: str, kind: str, fields: dict[str, str]):
        response = self.net.request(src, dst, kind, fields)
        if response is None:
            raise HopTimeout(f"{kind} to {dst} timed out")
        if not response.ok:
            raise _status_error(response.status, response.get("message"))
        return response

    def drain(self) -> None:
        self.net.run_until_idle()

    def _owner_of(self, digits: str) -> str:
        for actor in self.registries.values():
            delegation = actor.state.delegations.get(digits)
            if delegation is not None and delegation.owning_registry == actor.state.id:
                return actor.state.id
        return ""

    # ------------------------------------------------------------ operations

    def assign(self, number: str, user: str, tsp: str) -> dict[str, str]:
        def op(_eid: str, digits: str):
            sub = self.directory.assign(digits, user, tsp)
            return {"token": sub.token}

        return self._run_op("assign", {"user": user, "tsp": tsp}, op, number=number)

    def confirm(self, number: str, registrar: str) -> dict[str, str]:
        def op(_eid: str, digits: str):
            self.directory.confirm(digits, registrar)
            return {}

        return self._run_op("confirm", {"registrar": registrar}, op, number=number)

    def subscribe(
        self,
        number: str,
        user: str,
        registrar: str,
        token: str | None = None,
        confirmed: bool = False,
        payer: str | None = None,
    ) -> dict[str, str]:
        registry = self.cfg.home_of(registrar) if registrar in self.cfg.registrar_ids else ""

        def op(eid: str, digits: str):
            sub = self.directory.get(digits)
            secret = token
            if secret == "auto":
                secret = sub.token if sub else ""
            self._request(
                f"client:{user}",
                registrar,
                SUBSCRIBE,
                {
                    "number": digits,
                    "user": user,
                    "token": secret or "",
                    "confirmed": "1" if confirmed else "0",
                    "payer": payer or "",
                    "event": eid,
                },
            )
            self.drain()
            return {}

        return self._run_op(
            "subscribe",
            {
                "user": user,
                "registrar": registrar,
                "payer": payer or user,
                "registry": registry,
            },
            op,
            number=number,
        )

    def _parse_record_lines(
        self, record: str | list[str], visibility: str | None
    ) -> list[NaptrRecord]:
        lines = [record] if isinstance(record, str) else list(record)
        records = []
        for line in lines:
            parsed = parse_store_lines(line)
            if not parsed:
                raise InvalidRecord(f"empty record line {line!r}")
            rec = parsed[0]
            if visibility:
                rec = NaptrRecord(
                    order=rec.order,
                    preference=rec.preference,
                    flags=rec.flags,
                    service=rec.service,
                    regexp=rec.regexp,
                    replacement=rec.replacement,
                    visibility=Visibility(visibility),
                )
            records.append(rec)
        return records

    def provision(
        self,
        number: str,
        actor: str,
        record: str | list[str],
        visibility: str | None = None,
    ) -> dict[str, str]:
        def op(eid: str, digits: str):
            try:
                records = self._parse_record_lines(record, visibility)
            except NaptrError as exc:
                raise InvalidRecord(str(exc)) from exc
            lines = "\n".join(render_stored_line(r) for r in records)
            serving = self._serving(digits)
            self._request(
                f"client:{actor}",
                serving,
                PROVISION,
                {"number": digits, "actor": actor, "records": lines, "event": eid},
            )
            self.drain()
            return {
                "services": ",".join(r.service for r in records),
                "visibilities": ",".join(r.visibility.value for r in records),
                "records": lines,
                "registrar": serving,
            }

        return self._run_op("provision", {"actor": actor}, op, number=number)

    def grant(
        self,
        number: str,
        user: str,
        grantee: str,
        rights: str,
        scope: str = "*",
    ) -> dict[str, str]:
        self._grant_n += 1
        grant_id = f"g{self._grant_n}"
        detail = {
            "user": user,
            "grantee": grantee,
            "rights": rights,
            "scope": scope,
            "grant": grant_id,
        }

        def op(eid: str, digits: str):
            serving = self._serving(digits)
            self._request(
                f"client:{user}",
                serving,
                GRANT,
                {
                    "number": digits,
                    "user": user,
                    "grantee": grantee,
                    "rights": rights,
                    "scope": scope,
                    "grant_id": grant_id,
                    "event": eid,
                },
            )
            return {"registrar": serving}

        return self._run_op("grant", detail, op, number=number)

    def revoke(self, number: str, user: str, grant: str) -> dict[str, str]:
        def op(eid: str, digits: str):
            serving = self._serving(digits)
            self._request(
                f"client:{user}",
                serving,
                REVOKE,
                {"number": digits, "user": user, "grant_id": grant, "event": eid},
            )
            return {"registrar": serving}

        return self._run_op("revoke", {"user": user, "grant": grant}, op, number=number)

    def get(self, number: str, actor: str, service: str = "*") -> dict[str, str]:
        def op(_eid: str, digits: str):
            serving = self._serving(digits)
            response = self._request(
                f"client:{actor}",
                serving,
                GET,
                {"number": digits, "actor": actor, "service": service},
            )
            records = parse_store_lines(response.get("records"))
            return {
                "registrar": serving,
                "records": response.get("records"),
                "returned_services": ",".join(r.service for r in records),
                "returned_visibilities": ",".join(r.visibility.value for r in records),
            }

        return self._run_op(
            "get", {"actor": actor, "service": service}, op, number=number
        )

    def _transfer_context(self, digits: str, to: str) -> tuple[str, str, str]:
        """(transfer id, old registrar, old store snapshot for conservation)."""
        self._transfer_n += 1
        transfer_id = f"x{self._transfer_n}"
        sub = self.directory.get(digits)
        old = (sub.serving_registrar or "") if sub else ""
        old_snapshot = ""
        if old in self.registrars:
            old_snapshot = render_store_lines(self.registrars[old].store.get(digits, []))
        return transfer_id, old, old_snapshot

    def transfer(self, number: str, user: str, to: str) -> dict[str, str]:
        """Run the whole registrar-change state machine."""

        def op(eid: str, digits: str):
            transfer_id, old, old_snapshot = self._transfer_context(digits, to)
            self._request(
                f"client:{user}",
                to,
                TRANSFER_INIT,
                {"number": digits, "user": user, "transfer": transfer_id, "event": eid},
            )
            self._transfer_host[transfer_id] = to
            actor = self.registrars[to]
            record = actor.transfers[transfer_id]
            while record.state not in (TransferState.COMPLETE, TransferState.DISPUTED):
                actor.step_transfer(transfer_id, self.net, event=eid)
            self.drain()
            return {
                "from": old,
                "to": to,
                "transfer": transfer_id,
                "old_snapshot": old_snapshot,
                "state": record.state.value,
                "warnings": " / ".join(record.warnings),
                "migrated": render_store_lines(list(record.migrated)),
                "registry": self._owner_of(digits),
            }

        return self._run_op("transfer", {"user": user, "to": to}, op, number=number)

    # Paced transfer API: one state per call, so tests and scripts can
    # interleave disputes with the machine's progress.

    def begin_transfer(self, number: str, user: str, to: str) -> str:
        def op(eid: str, digits: str):
            transfer_id, old, old_snapshot = self._transfer_context(digits, to)
            self._request(
                f"client:{user}",
                to,
                TRANSFER_INIT,
                {"number": digits, "user": user, "transfer": transfer_id, "event": eid},
            )
            self._transfer_host[transfer_id] = to
            return {
                "from": old,
                "to": to,
                "transfer": transfer_id,
                "old_snapshot": old_snapshot,
                "state": TransferState.REQUESTED.value,
            }

        detail = self._run_op(
            "transfer_begin", {"user": user, "to": to}, op, number=number
        )
        return detail["transfer"]

    def step_transfer(self, transfer: str) -> dict[str, str]:
        host = self._transfer_host.get(transfer)
        if host is None:
            raise ScenarioError(f"unknown transfer {transfer!r}")
        actor = self.registrars[host]

        def op(eid: str):
            record = actor.step_transfer(transfer, self.net, event=eid)
            self.drain()
            detail = {
                "state": record.state.value,
                "to": record.to_registrar,
                "from": record.from_registrar,
                "number": record.number,
                "warnings": " / ".join(record.warnings),
            }
            if record.state is TransferState.RECORDS_MIGRATED:
                detail["migrated"] = render_store_lines(list(record.migrated))
            if record.state is TransferState.REGISTRY_UPDATED:
                detail["registry"] = self._owner_of(record.number)
            return detail

        return self._run_op("transfer_step", {"transfer": transfer}, op)

    def dispute_transfer(self, transfer: str, by: str, reason: str = "") -> dict[str, str]:
        host = self._transfer_host.get(transfer)
        if host is None:
            raise ScenarioError(f"unknown transfer {transfer!r}")

        def op(eid: str):
            response = self._request(
                f"client:{by}",
                host,
                TRANSFER_DISPUTE,
                {"transfer": transfer, "by": by, "reason": reason, "event": eid},
            )
            self.drain()
            record = self.registrars[host].transfers[transfer]
            return {
                "state": response.get("state"),
                "number": record.number,
                "from": record.from_registrar,
                "to": record.to_registrar,
            }

        return self._run_op(
            "dispute", {"transfer": transfer, "by": by, "reason": reason}, op
        )

    def disconnect(self, number: str, user: str, kind: str) -> dict[str, str]:
        def op(eid: str, digits: str):
            sub = self.directory.get(digits)
            if sub is None:
                raise UnknownSubscription(f"no subscription for {digits!r}")
            target = sub.serving_registrar or next(iter(self.registrars), "")
            self._request(
                f"client:{user}",
                target,
                DISCONNECT,
                {"number": digits, "user": user, "kind_arg": kind, "event": eid},
            )
            self.drain()
            return {"registrar": target}

        return self._run_op(
            "disconnect", {"user": user, "kind": kind}, op, number=number
        )

    def resolve(self, number: str, service: str = "*") -> dict[str, str]:
        def op(_eid: str, digits: str):
            result = resolver_mod.resolve(
                "+" + digits,
                self.net,
                tier0_id="tier0",
                apex=self.apex,
                service=service,
            )
            return {
                "uris": "\n".join(result.uris),
                "records": result.record_lines,
                "registrar": result.registrar,
                "registry": result.registry,
                "warnings": " / ".join(result.warnings),
                "trace": "\n".join(result.trace.render_lines()),
            }

        return self._run_op("resolve", {"service": service}, op, number=number)

    def cooperate(
        self, payer: str, tsp: str, approach: str = "ASP-directed", amount: float | None = None
    ) -> dict[str, str]:
        """A TSP-cooperation payment; meaningful in the ASP-registrar models."""

        def op(_eid: str):
            if self.cfg.model_id not in (2, 5):
                raise InvalidModelCombination(
                    "cooperation side-payments only arise in the ASP-registrar models"
                )
            return {}

        return self._run_op(
            "cooperate",
            {
                "payer": payer,
                "tsp": tsp,
                "approach": approach,
                "amount": f"{amount if amount is not None else self.cfg.user_fee:g}",
            },
            op,
        )

    def advance(self, ticks: int) -> dict[str, str]:
        def op(_eid: str):
            self.net.advance(ticks)
            return {}

        return self._run_op("advance", {"ticks": str(ticks)}, op)

    def offline(self, actor: str) -> dict[str, str]:
        def op(_eid: str):
            self.net.set_offline(actor)
            return {}

        return self._run_op("offline", {"actor": actor}, op)

    def online(self, actor: str) -> dict[str, str]:
        def op(_eid: str):
            self.net.set_online(actor)
            return {}

        return self._run_op("online", {"actor": actor}, op)

    def backdoor_provision(self, registrar: str, number: str, record: str, actor: str) -> None:
        """Harness-only: write a record past all access checks and log it as
        a successful provision, so soundness checkers have something to
        catch."""
        digits = parse_number(number).full_digits
        rec = parse_store_lines(record)[0]
        self.registrars[registrar].store.setdefault(digits, []).append(rec)
        event_id = self._next_event_id()
        self._append(
            event_id,
            "provision",
            "ok",
            {
                "number": digits,
                "actor": actor,
                "services": rec.service,
                "visibilities": rec.visibility.value,
                "records": render_stored_line(rec),
                "registrar": registrar,
            },
        )

    # ------------------------------------------------------------ state

    def state_hash(self) -> str:
        """Stable digest of all registry/registrar/subscription state."""
        out = io.StringIO()
        for reg_id in sorted(self.registries):
            state = self.registries[reg_id].state
            out.write(f"registry {reg_id}\n")
            for number in sorted(state.delegations):
                d = state.delegations[number]
                out.write(f"  {number}|{d.registrar}|{d.owning_registry}|{d.serial}\n")
            for number in sorted(state.tombstones):
                out.write(f"  tomb {number}|{state.tombstones[number]}\n")
            for entry in state.billing_ledger:
                out.write(f"  fee {entry.payer}|{entry.amount:g}|{entry.number}\n")
        for registrar_id in sorted(self.registrars):
            actor = self.registrars[registrar_id]
            out.write(f"registrar {registrar_id}\n")
            for number in sorted(actor.store):
                for rec in actor.store[number]:
                    out.write(f"  {number} {render_stored_line(rec)}\n")
            for number in sorted(actor.grants):
                for g in actor.grants[number]:
                    rights = ",".join(sorted(g.rights))
                    out.write(
                        f"  grant {g.grant_id}|{number}|{g.grantee}|{rights}|{g.scope.service}\n"
                    )
        for number in sorted(self.directory.subscriptions):
            sub = self.directory.subscriptions[number]
            out.write(
                f"sub {number}|{sub.user}|{sub.tsp}|{int(sub.enum_active)}|"
                f"{int(sub.phone_active)}|{sub.serving_registrar or ''}\n"
            )
        return hashlib.sha256(out.getvalue().encode("utf-8")).hexdigest()


def build_topology(cfg: ScenarioConfig, seed: int = 0) -> Topology:
    return Topology(cfg, seed=seed)


# ---------------------------------------------------------------- event scripts


@dataclass(frozen=True)
class Event:
    kind: str
    args: dict[str, str]


_TAIL_KEYS = ("record", "reason")


def parse_events(text: str) -> list[Event]:
    """Parse a line-delimited script: ``step <kind> key=value ...``.

    A ``record=`` or ``reason=`` argument captures the rest of the line
    verbatim, so zone lines keep their internal spaces.
    """
    events: list[Event] = []
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        tail_key = None
        tail_value = ""
        for key in _TAIL_KEYS:
            marker = f" {key}="
            at = line.find(marker)
            if at != -1:
                tail_key = key
                tail_value = line[at + len(marker):].strip()
                line = line[:at]
                break
        tokens = line.split()
        if len(tokens) < 2 or tokens[0] != "step":
            raise ScenarioError(f"line {lineno}: expected 'step <kind> ...'")
        args: dict[str, str] = {}
        for token in tokens[2:]:
            key, sep, value = token.partition("=")
            if not sep:
                raise ScenarioError(f"line {lineno}: argument {token!r} is not key=value")
            args[key] = value
        if tail_key is not None:
            args[tail_key] = tail_value
        events.append(Event(kind=tokens[1], args=args))
    return events


def run_events(topology: Topology, events: str | list[Event]) -> EventLog:
    """Execute a script; per-event errors are logged, never fatal."""
    if isinstance(events, str):
        events = parse_events(events)
    for event in events:
        args = event.args
        try:
            if event.kind == "assign":
                topology.assign(args["number"], args["user"], args["tsp"])
            elif event.kind == "confirm":
                topology.confirm(args["number"], args["registrar"])
            elif event.kind == "subscribe":
                topology.subscribe(
                    args["number"],
                    args["user"],
                    args["registrar"],
                    token=args.get("token"),
                    confirmed=args.get("confirmed") == "1",
                    payer=args.get("payer"),
                )
            elif event.kind == "provision":
                topology.provision(
                    args["number"],
                    args["actor"],
                    args["record"],
                    visibility=args.get("visibility"),
                )
            elif event.kind == "grant":
                topology.grant(
                    args["number"],
                    args["user"],
                    args["grantee"],
                    args.get("rights", "provision"),
                    args.get("scope", "*"),
                )
            elif event.kind == "revoke":
                topology.revoke(args["number"], args["user"], args["grant"])
            elif event.kind == "get":
                topology.get(args["number"], args["actor"], args.get("service", "*"))
            elif event.kind == "transfer":
                topology.transfer(args["number"], args["user"], args["to"])
            elif event.kind == "transfer_begin":
                topology.begin_transfer(args["number"], args["user"], args["to"])
            elif event.kind == "transfer_step":
                topology.step_transfer(args["transfer"])
            elif event.kind == "dispute":
                topology.dispute_transfer(
                    args["transfer"], args["by"], args.get("reason", "")
                )
            elif event.kind == "disconnect":
                topology.disconnect(args["number"], args["user"], args.get("kind", "enum_only"))
            elif event.kind == "resolve":
                topology.resolve(args["number"], args.get("service", "*"))
            elif event.kind == "cooperate":
                amount = args.get("amount")
                topology.cooperate(
                    args["payer"],
                    args["tsp"],
                    args.get("approach", "ASP-directed"),
                    amount=float(amount) if amount else None,
                )
            elif event.kind == "advance":
                topology.advance(int(args.get("ticks", "1")))
            elif event.kind == "offline":
                topology.offline(args["actor"])
            elif event.kind == "online":
                topology.online(args["actor"])
            else:
                topology._append(
                    topology._next_event_id(), event.kind, "UnknownEvent", dict(args)
                )
        except EnumStackError:
            continue  # already logged by the operation
    topology.drain()
    topology.completed = True
    return EventLog(records=list(topology.log))


# ---------------------------------------------------------------- value flow


@dataclass(frozen=True)
class ValueFlowEdge:
    payer: str
    payer_role: str
    payee: str
    payee_role: str
    amount: float
    cause: str

    def render(self) -> str:
        return (
            f"{self.payer}({self.payer_role}) -> {self.payee}({self.payee_role}) "
            f"{self.amount:g} [{self.cause}]"
        )


@dataclass
class ValueFlowGraph:
    edges: tuple[ValueFlowEdge, ...]

    def role_pairs(self) -> set[tuple[str, str]]:
        return {(e.payer_role, e.payee_role) for e in self.edges}

    def render_lines(self) -> list[str]:
        return [e.render() for e in self.edges]


def value_flow_from_log(records: list[LogRecord], cfg: ScenarioConfig) -> ValueFlowGraph:
    """Derive payment edges from a run log.

    Subscriptions pay the serving registrar (in the TSP-registrar models
    an ASP registrant pays instead of the user); every registration and
    completed registrar change pays the registry a flat fee; cooperation
    events add side payments to TSPs.
    """
    edges: list[ValueFlowEdge] = []
    role = cfg.party_role
    for rec in records:
        if not rec.ok:
            continue
        if rec.kind == "subscribe":
            user = rec.detail.get("user", "")
            registrar = rec.detail.get("registrar", "")
            payer = rec.detail.get("payer", user)
            if not (
                payer != user
                and role(payer) == Role.ASP.value
                and cfg.registrar_kind is Role.TSP
            ):
                payer = user
            edges.append(
                ValueFlowEdge(
                    payer, role(payer), registrar, role(registrar),
                    cfg.user_fee, rec.event_id,
                )
            )
            registry = rec.detail.get("registry", "")
            if registry:
                edges.append(
                    ValueFlowEdge(
                        registrar, role(registrar), registry, role(registry),
                        cfg.flat_fee, rec.event_id,
                    )
                )
        elif rec.kind == "transfer" and rec.detail.get("state") == "Complete":
            registrar = rec.detail.get("to", "")
            registry = rec.detail.get("registry", "")
            if registry:
                edges.append(
                    ValueFlowEdge(
                        registrar, role(registrar), registry, role(registry),
                        cfg.flat_fee, rec.event_id,
                    )
                )
        elif rec.kind == "transfer_step" and rec.detail.get("state") == "RegistryUpdated":
            registrar = rec.detail.get("to", "")
            registry = rec.detail.get("registry", "")
            if registry:
                edges.append(
                    ValueFlowEdge(
                        registrar, role(registrar), registry, role(registry),
                        cfg.flat_fee, rec.event_id,
                    )
                )
        elif rec.kind == "cooperate":
            payer = rec.detail.get("payer", "")
            tsp = rec.detail.get("tsp", "")
            edges.append(
                ValueFlowEdge(
                    payer, role(payer), tsp, role(tsp),
                    float(rec.detail.get("amount", "1")), rec.event_id,
                )
            )
    return ValueFlowGraph(edges=tuple(edges))


def value_flow(topology: Topology) -> ValueFlowGraph:
    if not topology.completed:
        raise RunIncomplete("run the event script before deriving value flows")
    return value_flow_from_log(topology.log, topology.cfg)


# ---------------------------------------------------------------- access oracle


class AccessOracle:
    """Independent access matrix, replayed from the log alone.

    Deliberately re-implements the rights rules with plain set algebra so
    a defect in the registrar's enforcement cannot hide: every successful
    write (and every restricted read) in the log must be justified by the
    subscriber/serving-registrar identities, the implicit TSP rule, or a
    grant visible in the log at that point.
    """

    def __init__(self, cfg: ScenarioConfig):
        self.tsp_implicit = cfg.registrar_kind is Role.TSP
        self.network_related = {s.lower() for s in cfg.network_related}

    def check(self, records: list[LogRecord]) -> list[str]:
        subs: dict[str, dict[str, str]] = {}
        grants: dict[str, list[dict[str, object]]] = {}
        violations: list[str] = []

        def scope_ok(scope: str, service: str) -> bool:
            return scope == "*" or scope.lower() == service.lower()

        def may_write(number: str, actor: str, service: str) -> bool:
            sub = subs.get(number)
            if sub is None:
                return False
            if actor == sub["user"] or actor == sub["serving"]:
                return True
            if (
                self.tsp_implicit
                and actor == sub["tsp"]
                and service.lower() in self.network_related
            ):
                return True
            for g in grants.get(number, []):
                if (
                    g["grantee"] == actor
                    and (set(g["rights"]) & {"provision", "change"})  # type: ignore[arg-type]
                    and scope_ok(str(g["scope"]), service)
                ):
                    return True
            return False

        def may_read_restricted(number: str, actor: str, service: str) -> bool:
            sub = subs.get(number)
            if sub is None:
                return False
            if actor == sub["user"] or actor == sub["serving"]:
                return True
            for g in grants.get(number, []):
                if (
                    g["grantee"] == actor
                    and "access" in g["rights"]  # type: ignore[operator]
                    and scope_ok(str(g["scope"]), service)
                ):
                    return True
            return False

        for rec in records:
            if not rec.ok:
                continue
            d = rec.detail
            number = d.get("number", "")
            if rec.kind == "assign":
                subs[number] = {"user": d["user"], "tsp": d["tsp"], "serving": ""}
                grants.pop(number, None)
            elif rec.kind == "subscribe":
                if number in subs:
                    subs[number]["serving"] = d.get("registrar", "")
            elif rec.kind == "transfer" and d.get("state") == "Complete":
                if number in subs:
                    subs[number]["serving"] = d.get("to", "")
                grants.pop(number, None)
            elif rec.kind == "transfer_step" and d.get("state") == "RegistryUpdated":
                if number in subs:
                    subs[number]["serving"] = d.get("to", "")
                grants.pop(number, None)
            elif rec.kind == "dispute":
                if number in subs and d.get("from"):
                    subs[number]["serving"] = d["from"]
            elif rec.kind == "disconnect":
                if number in subs:
                    subs[number]["serving"] = ""
                grants.pop(number, None)
            elif rec.kind == "grant":
                grants.setdefault(number, []).append(
                    {
                        "id": d.get("grant", ""),
                        "grantee": d.get("grantee", ""),
                        "rights": set(d.get("rights", "").split(",")),
                        "scope": d.get("scope", "*"),
                    }
                )
            elif rec.kind == "revoke":
                grants[number] = [
                    g for g in grants.get(number, []) if g["id"] != d.get("grant")
                ]
            elif rec.kind == "provision":
                actor = d.get("actor", "")
                for service in d.get("services", "").split(","):
                    if service and not may_write(number, actor, service):
                        violations.append(
                            f"{rec.event_id}: {actor} wrote {service} for {number}"
                        )
            elif rec.kind == "get":
                actor = d.get("actor", "")
                services = d.get("returned_services", "").split(",")
                visibilities = d.get("returned_visibilities", "").split(",")
                for service, vis in zip(services, visibilities):
                    if vis == "restricted" and not may_read_restricted(
                        number, actor, service
                    ):
                        violations.append(
                            f"{rec.event_id}: {actor} read restricted {service} for {number}"
                        )
        return violations


# ---------------------------------------------------------------- invariants


@dataclass
class InvariantResult:
    name: str
    passed: bool
    violations: list[str] = field(default_factory=list)


@dataclass
class InvariantReport:
    results: list[InvariantResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def result(self, name: str) -> InvariantResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def render_lines(self) -> list[str]:
        lines = []
        for r in self.results:
            lines.append(f"{'PASS' if r.passed else 'FAIL'} {r.name}")
            for v in r.violations[:10]:
                lines.append(f"  {v}")
        return lines


def _multiset(lines: str) -> dict[str, int]:
    counts: dict[str, int] = {}
    for line in lines.splitlines():
        if line.strip():
            counts[line] = counts.get(line, 0) + 1
    return counts


def assert_invariants(topology: Topology) -> InvariantReport:
    """Evaluate the cross-module invariant suite on a quiescent topology."""
    topology.drain()
    results: list[InvariantResult] = []
    log = topology.log
    cfg = topology.cfg

    # single-store: each number's records live at exactly one registrar,
    # and an active number's records live at its serving registrar.
    violations: list[str] = []
    holders: dict[str, list[str]] = {}
    for registrar_id, actor in topology.registrars.items():
        for number, records in actor.store.items():
            if records:
                holders.setdefault(number, []).append(registrar_id)
    for number, where in sorted(holders.items()):
        if len(where) > 1:
            violations.append(f"{number} stored at {', '.join(where)}")
            continue
        sub = topology.directory.get(number)
        if sub and sub.enum_active and sub.serving_registrar != where[0]:
            violations.append(
                f"{number} stored at {where[0]} but served by {sub.serving_registrar}"
            )
    results.append(InvariantResult("single_store", not violations, violations))

    # transfer conservation: clean transfers carry the exact multiset.
    violations = []
    begin_snapshots = {
        rec.detail.get("transfer", ""): rec.detail.get("old_snapshot", "")
        for rec in log
        if rec.kind == "transfer_begin" and rec.ok
    }
    for rec in log:
        if not rec.ok:
            continue
        if rec.kind == "transfer" and not rec.detail.get("warnings"):
            if _multiset(rec.detail.get("migrated", "")) != _multiset(
                rec.detail.get("old_snapshot", "")
            ):
                violations.append(f"{rec.event_id}: migrated set differs from source")
        if (
            rec.kind == "transfer_step"
            and rec.detail.get("state") == "RecordsMigrated"
            and not rec.detail.get("warnings")
        ):
            snapshot = begin_snapshots.get(rec.detail.get("transfer", ""), "")
            if _multiset(rec.detail.get("migrated", "")) != _multiset(snapshot):
                violations.append(f"{rec.event_id}: migrated set differs from source")
    results.append(InvariantResult("transfer_conservation", not violations, violations))

    # access soundness via the independent matrix.
    violations = AccessOracle(cfg).check(log)
    results.append(InvariantResult("access_soundness", not violations, violations))

    # serial monotonicity per registry per number.
    violations = []
    for reg_id, actor in topology.registries.items():
        for number, serials in actor.state.observed_serials.items():
            for a, b in zip(serials, serials[1:]):
                if b <= a:
                    violations.append(f"{reg_id} observed {number} serials {a} -> {b}")
    results.append(InvariantResult("serial_monotonicity", not violations, violations))

    # billing conservation: ledgers equal flat fee times charged events.
    charged = 0
    for rec in log:
        if not rec.ok:
            continue
        if rec.kind == "subscribe":
            charged += 1
        elif rec.kind == "transfer" and rec.detail.get("state") == "Complete":
            charged += 1
        elif rec.kind == "transfer_step" and rec.detail.get("state") == "RegistryUpdated":
            charged += 1
    ledger_total = sum(a.state.ledger_total() for a in topology.registries.values())
    expected = cfg.flat_fee * charged
    ok = abs(ledger_total - expected) < 1e-9
    results.append(
        InvariantResult(
            "billing_conservation",
            ok,
            [] if ok else [f"ledger {ledger_total:g} != {cfg.flat_fee:g} x {charged}"],
        )
    )

    # replica convergence (meaningful with multiple registries).
    violations = replicas_converged([a.state for a in topology.registries.values()])
    results.append(InvariantResult("replica_convergence", not violations, violations))

    # single-registry models must never emit a peer update.
    if cfg.registry_multiplicity == "single":
        count = sum(
            1 for rec in topology.net.frame_log if rec.frame.kind == PEER_UPDATE
        )
        results.append(
            InvariantResult(
                "peering_inert",
                count == 0,
                [] if count == 0 else [f"{count} peer updates in a single-registry run"],
            )
        )
    else:
        results.append(InvariantResult("peering_inert", True, []))

    # transparency: logged resolve answers equal a direct recomputation
    # over the very records the registrar served.
    violations = []
    for rec in log:
        if rec.kind != "resolve" or not rec.ok:
            continue
        records = tuple(parse_store_lines(rec.detail.get("records", "")))
        number = parse_number("+" + rec.detail["number"])
        record_set = NaptrRecordSet(number=number, records=records)
        uris, _ = resolve_record_set(
            record_set,
            ServiceSelector(rec.detail.get("service", "*")),
            number,
            Visibility.RESTRICTED,
        )
        if "\n".join(uris) != rec.detail.get("uris", ""):
            violations.append(f"{rec.event_id}: resolve answer diverges from content")
    results.append(InvariantResult("model_transparency", not violations, violations))

    # transfer state sequences never regress.
    violations = []
    order = {state: i for i, state in enumerate(TransferState)}
    for registrar_id, actor in topology.registrars.items():
        for tid, record in actor.transfers.items():
            seen = record.history
            for a, b in zip(seen, seen[1:]):
                if b is TransferState.DISPUTED:
                    if a in (TransferState.COMPLETE, TransferState.DISPUTED):
                        violations.append(f"{tid}: disputed after {a.value}")
                elif order[b] <= order[a]:
                    violations.append(f"{tid}: {a.value} -> {b.value}")
    results.append(InvariantResult("transfer_monotonic", not violations, violations))

    return InvariantReport(results=results)
