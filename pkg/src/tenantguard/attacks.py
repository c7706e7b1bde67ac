"""Feasibility of the ten cross-tenant attacks over a scenario, with evidence."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from . import __version__
from .access import (
    AccessDecision,
    AccessKind,
    EvidenceStep,
    build_exec_context,
    can_access,
    descriptor_paths,
    fd_decision,
    php_can_access,
)
from .model import FileNode, FsSnapshot, NodeKind, Scenario, Site

ANY_TENANT = "any-tenant"
PLANTED_NAME = ".tg-planted"


class AttackId(str, Enum):
    A1 = "A1_ConfidentialityViolation"
    A2 = "A2_IntegrityViolation"
    A3 = "A3_SessionPoisoning"
    A4 = "A4_SessionSnooping"
    A5 = "A5_LogPoisoning"
    A6 = "A6_LogSnooping"
    A7 = "A7_IntensiveLFI"
    A8 = "A8_CsrfTokenPoisoning"
    A9 = "A9_FastBruteForce"
    A10 = "A10_ConvenientPhishing"

    def __str__(self) -> str:
        return self.value

    @property
    def short(self) -> str:
        return self.name

    @property
    def order(self) -> int:
        return int(self.name[1:])

    @classmethod
    def parse(cls, text: str) -> "AttackId":
        """Accept ``A5``, ``a5`` or the full ``A5_LogPoisoning``."""
        for member in cls:
            if text.upper() == member.name or text == member.value:
                return member
        raise ValueError(f"unknown attack id: {text!r}")


class Severity(str, Enum):
    CRITICAL = "critical"
    HIGH = "high"
    MEDIUM = "medium"

    def __str__(self) -> str:
        return self.value


SEVERITY = {
    AttackId.A1: Severity.HIGH,
    AttackId.A2: Severity.CRITICAL,
    AttackId.A3: Severity.CRITICAL,
    AttackId.A4: Severity.HIGH,
    AttackId.A5: Severity.CRITICAL,
    AttackId.A6: Severity.HIGH,
    AttackId.A7: Severity.HIGH,
    AttackId.A8: Severity.CRITICAL,
    AttackId.A9: Severity.MEDIUM,
    AttackId.A10: Severity.MEDIUM,
}


@dataclass(frozen=True)
class Finding:
    attack: AttackId
    attacker: str
    victim: Optional[str]
    evidence: tuple  # of AccessDecision
    severity: Severity
    remediation_refs: tuple = ()

    @property
    def sort_key(self) -> tuple:
        return (self.attack.order, self.attacker, self.victim or "")


@dataclass(frozen=True)
class AuditReport:
    digest: dict
    findings: tuple
    version: str = __version__
    counts: dict = field(default_factory=dict)

    @classmethod
    def build(cls, digest: dict, findings) -> "AuditReport":
        findings = tuple(sorted(findings, key=lambda f: f.sort_key))
        counts: dict = {}
        for f in findings:
            counts[f.attack.value] = counts.get(f.attack.value, 0) + 1
        return cls(digest=digest, findings=findings, counts=counts)

    @property
    def attack_ids(self) -> set:
        return {f.attack for f in self.findings}


def _fact(subject: str, check: str) -> AccessDecision:
    return AccessDecision(True, (EvidenceStep(subject, check, "fact", True),))


def _refs(attack: AttackId, a: Optional[Site], b: Optional[Site]) -> tuple:
    if attack in (AttackId.A1, AttackId.A2):
        return ("host:mode", f"vhost:{a.id}:open_basedir", f"fs:chmod:/home/{b.id}")
    if attack in (AttackId.A3, AttackId.A4, AttackId.A8):
        return (
            f"fs:mkdir:/home/{b.id}/session",
            f"fs:chmod:/home/{b.id}/session",
            f"vhost:{b.id}:session.save_path",
        )
    if attack in (AttackId.A5, AttackId.A6):
        return (
            f"fs:mkdir:/home/{b.id}/log",
            f"fs:chmod:/home/{b.id}/log",
            f"vhost:{b.id}:ErrorLog",
            f"vhost:{b.id}:CustomLog",
            "host:shared_access_log",
            "host:mode",
        )
    if attack is AttackId.A7:
        return (f"vhost:{a.id}:open_basedir", f"vhost:{b.id}:open_basedir", "host:mode")
    if attack is AttackId.A9:
        return ("host:local_traffic_filtered",)
    return ("host:userdir_enabled",)


class _Evaluator:
    """Caches execution contexts for one scenario."""

    def __init__(self, s: Scenario):
        self.s = s
        self.fs = s.fs
        self.ctx = {site.id: build_exec_context(s, site) for site in s.host.sites}

    def php(self, site: Site, path: str, kind: AccessKind, fs: FsSnapshot = None) -> AccessDecision:
        return php_can_access(self.ctx[site.id], fs or self.fs, path, kind)

    def first_allowed(self, candidates) -> Optional[AccessDecision]:
        for thunk in candidates:
            d = thunk()
            if d.allowed:
                return d
        return None

    # each predicate returns the evidence tuple, or None when infeasible

    def a1(self, a: Site, b: Site):
        for f in self.fs.under(b.docroot):
            if f.kind is NodeKind.FILE:
                d = self.php(a, f.path, AccessKind.READ)
                if d.allowed:
                    return (d,)
        return None

    def a2(self, a: Site, b: Site):
        for n in self.fs.under(b.docroot, include_self=True):
            kind = AccessKind.CREATE_IN if n.is_dir else AccessKind.WRITE
            d = self.php(a, n.path, kind)
            if d.allowed:
                return (d,)
        return None

    def a3(self, a: Site, b: Site):
        d = self.php(a, b.session_dir, AccessKind.CREATE_IN)
        if d.allowed:
            return (d,)
        if a.session_dir == b.session_dir:
            # attacker's own site writes a crafted session into the shared store
            d = can_access(self.fs, self.ctx[a.id].identity, b.session_dir, AccessKind.CREATE_IN)
            if d.allowed:
                return (_fact(b.session_dir, f"session store shared by {a.id} and {b.id}"), d)
        return None

    def a4(self, a: Site, b: Site):
        shared = a.session_dir == b.session_dir
        identity = self.ctx[a.id].identity
        for f in self.fs.under(b.session_dir):
            if f.kind is not NodeKind.FILE:
                continue
            for kind in (AccessKind.READ, AccessKind.WRITE):
                d = self.php(a, f.path, kind)
                if d.allowed:
                    return (d,)
            if shared:
                # loading a foreign session id through the attacker's own session handler
                d = can_access(self.fs, identity, f.path, AccessKind.READ)
                if d.allowed:
                    return (_fact(b.session_dir, f"session store shared by {a.id} and {b.id}"), d)
        return None

    def victim_logs(self, b: Site) -> list:
        logs = [b.error_log, b.access_log]
        shared = self.s.host.shared_access_log
        if shared and shared not in logs:
            logs.append(shared)
        return list(dict.fromkeys(logs))

    def _log_attack(self, a: Site, b: Site, write: bool):
        ctx = self.ctx[a.id]
        fds = descriptor_paths(ctx)
        reachable = fds.writable if write else fds.readable
        kind = AccessKind.WRITE if write else AccessKind.READ
        evidence = []
        for log in self.victim_logs(b):
            if log in reachable:
                evidence.append(fd_decision(ctx, log, write))
                continue
            node = self.fs.get(log)
            if node is not None and node.kind is NodeKind.FILE:
                d = self.php(a, log, kind)
                if d.allowed:
                    evidence.append(d)
        return tuple(evidence) or None

    def a5(self, a: Site, b: Site):
        return self._log_attack(a, b, write=True)

    def a6(self, a: Site, b: Site):
        return self._log_attack(a, b, write=False)

    def a7(self, a: Site, b: Site):
        if not b.annotations.has_lfi:
            return None
        me = self.ctx[a.id].identity
        for d in self.fs.under("/", include_self=True):
            if not d.is_dir:
                continue
            create = self.php(a, d.path, AccessKind.CREATE_IN)
            if not create.allowed:
                continue
            planted_path = ("" if d.path == "/" else d.path) + "/" + PLANTED_NAME
            planted = FileNode(planted_path, NodeKind.FILE, me.uid, me.gid, 0o644)
            include = self.php(b, planted_path, AccessKind.READ, fs=self.fs.with_nodes(planted))
            if include.allowed:
                return (_fact(b.id, "has local file inclusion"), create, include)
        return None

    def a8(self, a: Site, b: Site):
        if not b.annotations.csrf_in_session:
            return None
        ev = self.a3(a, b) or self.a4(a, b)
        if ev is None:
            return None
        return (_fact(b.id, "csrf tokens kept in session files"),) + ev

    def host_level(self, attack: AttackId):
        host = self.s.host
        if self.s.tenant_count() < 2:
            return None
        tenants = _fact("host", f"{self.s.tenant_count()} tenants share the host")
        if attack is AttackId.A9 and not host.local_traffic_filtered:
            return (tenants, _fact("host:local_traffic_filtered", "local traffic bypasses WAF/NIDPS"))
        if attack is AttackId.A10 and host.userdir_enabled:
            return (tenants, _fact("host:userdir_enabled", "per-user /~name/ URLs on a shared domain"))
        return None


_PAIR_CHECKS = {
    AttackId.A1: _Evaluator.a1,
    AttackId.A2: _Evaluator.a2,
    AttackId.A3: _Evaluator.a3,
    AttackId.A4: _Evaluator.a4,
    AttackId.A5: _Evaluator.a5,
    AttackId.A6: _Evaluator.a6,
    AttackId.A7: _Evaluator.a7,
    AttackId.A8: _Evaluator.a8,
}


def _check(ev: _Evaluator, attack: AttackId) -> list:
    findings = []
    if attack in _PAIR_CHECKS:
        predicate = _PAIR_CHECKS[attack]
        for a, b in ev.s.tenant_pairs():
            evidence = predicate(ev, a, b)
            if evidence:
                findings.append(
                    Finding(attack, a.id, b.id, evidence, SEVERITY[attack], _refs(attack, a, b))
                )
    else:
        evidence = ev.host_level(attack)
        if evidence:
            findings.append(
                Finding(attack, ANY_TENANT, None, evidence, SEVERITY[attack], _refs(attack, None, None))
            )
    return sorted(findings, key=lambda f: f.sort_key)


def check_attack(s: Scenario, attack: AttackId) -> list:
    """One finding per (attacker, victim) pair for which ``attack`` is feasible."""
    return _check(_Evaluator(s), AttackId(attack))


def scenario_digest(s: Scenario) -> dict:
    host = s.host
    return {
        "mode": host.mode.value,
        "sites": len(host.sites),
        "flags": {
            "safe_mode": host.safe_mode,
            "userdir_enabled": host.userdir_enabled,
            "local_traffic_filtered": host.local_traffic_filtered,
            "shared_access_log": host.shared_access_log,
            "open_basedir": sorted(k for k in host.open_basedir if host.open_basedir[k]),
        },
    }


def audit_all(s: Scenario, attacks=None) -> AuditReport:
    ev = _Evaluator(s)
    findings = []
    for attack in attacks or list(AttackId):
        findings.extend(_check(ev, attack))
    return AuditReport.build(scenario_digest(s), findings)
