"""End-to-end resolution client.

Walks number -> domain name -> tier-0 discovery -> tier-1 delegation ->
tier-2 record fetch -> selection and rewrite, entirely over the simulated
wire, and returns the URIs together with a hop-by-hop trace. Resolution
never mutates topology state; each hop is retried once on timeout, and
tier-1 falls through the discovered registries in table order until one
answers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import errors
from .e164 import ApexConfig, E164Number, parse_number, to_domain
from .errors import EnumStackError, HopTimeout
from .naptr import NaptrRecordSet, ServiceSelector, resolve_record_set, Visibility
from .registrar import parse_store_lines
from .simulator import Network
from .wire import DISCOVER, Frame, GET, LOOKUP


@dataclass
class Hop:
    tier: str
    target: str
    request: Frame | None = None
    response: Frame | None = None
    note: str = ""

    def render(self) -> str:
        req = f" req={self.request.req_id}" if self.request is not None else ""
        out = self.response.fields if self.response is not None else {}
        summary = ";".join(f"{k}={v}" for k, v in sorted(out.items()))
        note = f" ({self.note})" if self.note else ""
        return f"{self.tier} {self.target}{req} -> {summary or 'timeout'}{note}"


@dataclass
class ResolutionTrace:
    number: str
    domain: str
    hops: list[Hop] = field(default_factory=list)

    def render_lines(self) -> list[str]:
        return [f"number {self.number} domain {self.domain}"] + [
            hop.render() for hop in self.hops
        ]


@dataclass
class Resolution:
    number: E164Number
    uris: list[str]
    warnings: list[str]
    trace: ResolutionTrace
    registrar: str = ""
    registry: str = ""
    record_lines: str = ""


def _raise_status(status: str, message: str) -> None:
    exc_type = getattr(errors, status, None)
    if isinstance(exc_type, type) and issubclass(exc_type, EnumStackError):
        raise exc_type(message)
    raise EnumStackError(f"{status}: {message}")


def _fetch_records(
    net: Network,
    client_id: str,
    tier0_id: str,
    apex: ApexConfig,
    raw_number: str,
    service: str,
    default_country_code: str | None = None,
) -> tuple[E164Number, str, ResolutionTrace, Resolution]:
    number = parse_number(raw_number, default_country_code=default_country_code)
    domain = to_domain(number, apex)
    trace = ResolutionTrace(number=number.render(), domain=domain.render())

    hop = Hop(tier="tier0", target=tier0_id)
    response = net.request(client_id, tier0_id, DISCOVER, {"cc": number.full_digits})
    hop.response = response
    trace.hops.append(hop)
    if response is None:
        raise HopTimeout("tier-0 discovery timed out")
    if not response.ok:
        _raise_status(response.status, response.get("message"))
    registries = [r for r in response.get("registries").split(",") if r]

    registrar = ""
    registry = ""
    for reg_id in registries:
        hop = Hop(tier="tier1", target=reg_id)
        response = net.request(client_id, reg_id, LOOKUP, {"number": number.full_digits})
        hop.response = response
        if response is None:
            hop.note = "timeout, trying next registry"
            trace.hops.append(hop)
            continue
        trace.hops.append(hop)
        if not response.ok:
            _raise_status(response.status, response.get("message"))
        registrar = response.get("registrar")
        registry = reg_id
        break
    else:
        raise HopTimeout(f"no registry answered for {number.full_digits}")

    hop = Hop(tier="tier2", target=registrar)
    response = net.request(
        client_id,
        registrar,
        GET,
        {"number": number.full_digits, "actor": client_id, "service": service},
    )
    hop.response = response
    trace.hops.append(hop)
    if response is None:
        raise HopTimeout(f"registrar {registrar} timed out")
    if not response.ok:
        _raise_status(response.status, response.get("message"))

    result = Resolution(
        number=number,
        uris=[],
        warnings=[],
        trace=trace,
        registrar=registrar,
        registry=registry,
        record_lines=response.get("records"),
    )
    return number, response.get("records"), trace, result


def resolve(
    raw_number: str,
    net: Network,
    tier0_id: str = "tier0",
    apex: ApexConfig = ApexConfig(),
    service: str = "*",
    client_id: str = "resolver",
    default_country_code: str | None = None,
) -> Resolution:
    """Resolve a number to the URIs for *service* ("*" for all).

    Raises the underlying tier errors (UnknownCountryCode, NoDelegation,
    EnumInactive, HopTimeout); a service with no matching records is an
    empty list, not an error.
    """
    number, lines, trace, result = _fetch_records(
        net, client_id, tier0_id, apex, raw_number, service, default_country_code
    )
    record_set = NaptrRecordSet(number=number, records=tuple(parse_store_lines(lines)))
    # The registrar already filtered visibility for this requester.
    uris, warnings = resolve_record_set(
        record_set, ServiceSelector(service), number, Visibility.RESTRICTED
    )
    result.uris = uris
    result.warnings = warnings
    return result


def resolve_all(
    raw_number: str,
    net: Network,
    tier0_id: str = "tier0",
    apex: ApexConfig = ApexConfig(),
    client_id: str = "resolver",
    default_country_code: str | None = None,
) -> dict[str, list[str]]:
    """Wildcard resolution grouped by service field."""
    number, lines, trace, _ = _fetch_records(
        net, client_id, tier0_id, apex, raw_number, "*", default_country_code
    )
    records = parse_store_lines(lines)
    record_set = NaptrRecordSet(number=number, records=tuple(records))
    services: list[str] = []
    for rec in records:
        if rec.service not in services:
            services.append(rec.service)
    grouped: dict[str, list[str]] = {}
    for service in services:
        uris, _warnings = resolve_record_set(
            record_set, ServiceSelector(service), number, Visibility.RESTRICTED
        )
        if uris:
            grouped[service] = uris
    return grouped
