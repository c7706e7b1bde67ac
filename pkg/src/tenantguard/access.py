"""What a site's scripts can reach: POSIX checks, execution identity, PHP overlays, inherited fds."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .model import (
    FsSnapshot,
    HostConfig,
    Mode,
    Principal,
    Scenario,
    Site,
    ancestors_of,
    is_under,
)


class AccessKind(str, Enum):
    READ = "Read"
    WRITE = "Write"
    TRAVERSE = "Traverse"
    CREATE_IN = "CreateIn"  # write + search on a directory: may create entries

    def __str__(self) -> str:
        return self.value


# bits needed on the target node, per kind
_NEEDED = {
    AccessKind.READ: 0o4,
    AccessKind.WRITE: 0o2,
    AccessKind.TRAVERSE: 0o1,
    AccessKind.CREATE_IN: 0o3,
}

_CHECK_NAMES = {
    AccessKind.READ: "read",
    AccessKind.WRITE: "write",
    AccessKind.TRAVERSE: "traverse",
    AccessKind.CREATE_IN: "create_in",
}

PERMISSION_CLASSES = ("owner", "group", "other", "superuser", "fd", "safe_mode", "open_basedir")


class AccessError(ValueError):
    pass


@dataclass(frozen=True)
class EvidenceStep:
    path: str
    check: str
    cls: str
    outcome: bool

    def as_dict(self) -> dict:
        return {"path": self.path, "check": self.check, "class": self.cls, "outcome": self.outcome}


@dataclass(frozen=True)
class AccessDecision:
    allowed: bool
    chain: tuple

    def replays(self) -> bool:
        """Chain is self-consistent: stops at the first failure and ends on the verdict."""
        if not self.chain or self.chain[-1].outcome != self.allowed:
            return False
        return all(step.outcome for step in self.chain[:-1])


@dataclass(frozen=True)
class Restrictions:
    safe_mode: bool = False
    basedir: Optional[tuple] = None
    script_owner: int = 0


@dataclass(frozen=True)
class ExecutionContext:
    site: str
    identity: Principal
    fd_table: tuple = ()  # (path, "read" | "write-append")
    restrictions: Restrictions = field(default_factory=Restrictions)


@dataclass(frozen=True)
class DescriptorPaths:
    readable: frozenset
    writable: frozenset


def exec_identity(host: HostConfig, site: Site, principals) -> Principal:
    """Principal whose privileges a site's scripts run with under ``host.mode``."""
    name = site.owner if host.mode.runs_as_owner else host.webserver
    for p in principals:
        if p.name == name:
            return p
    raise KeyError(name)


def build_exec_context(scenario: Scenario, site: Site) -> ExecutionContext:
    """Runtime identity, inherited descriptors and PHP overlays for one site.

    Module workers inherit the fds the root parent opened for this vhost's
    logs and the server-wide access log. Per-site MPM workers only see their
    own vhost's logs. CGI-family interpreters are fresh processes and
    inherit nothing.
    """
    host = scenario.host
    identity = exec_identity(host, site, scenario.principals)
    paths: list[str] = []
    if host.mode is Mode.APACHE_MODULE:
        paths = [site.error_log, site.access_log]
        if host.shared_access_log:
            paths.append(host.shared_access_log)
    elif host.mode in (Mode.PERUSER_MPM, Mode.ITK_MPM):
        paths = [site.error_log, site.access_log]
    seen: list[str] = []
    for p in paths:
        if p not in seen:
            seen.append(p)
    owner = scenario.principal(site.owner)
    return ExecutionContext(
        site=site.id,
        identity=identity,
        fd_table=tuple((p, "write-append") for p in seen),
        restrictions=Restrictions(
            safe_mode=host.safe_mode,
            basedir=host.basedir_for(site.id),
            script_owner=owner.uid,
        ),
    )


def _class_bits(node, p: Principal) -> tuple[str, int]:
    if node.owner == p.uid:
        return "owner", (node.mode >> 6) & 7
    if node.group in p.groups:
        return "group", (node.mode >> 3) & 7
    return "other", node.mode & 7


def can_access(fs: FsSnapshot, p: Principal, path: str, kind: AccessKind) -> AccessDecision:
    kind = AccessKind(kind)
    node = fs.get(path)
    if node is None:
        raise AccessError(f"no such path: {path}")
    if kind is AccessKind.CREATE_IN and not node.is_dir:
        raise AccessError(f"CreateIn on non-directory {path}")

    chain: list[EvidenceStep] = []
    for anc in ancestors_of(path):
        if p.is_superuser:
            chain.append(EvidenceStep(anc, "traverse", "superuser", True))
            continue
        cls, bits = _class_bits(fs.nodes[anc], p)
        ok = bool(bits & 1)
        chain.append(EvidenceStep(anc, "traverse", cls, ok))
        if not ok:
            return AccessDecision(False, tuple(chain))

    if kind is AccessKind.TRAVERSE and not node.is_dir:
        # a plain file needs only its ancestors to be searchable
        return AccessDecision(True, tuple(chain))

    check = _CHECK_NAMES[kind]
    if p.is_superuser:
        chain.append(EvidenceStep(path, check, "superuser", True))
        return AccessDecision(True, tuple(chain))
    cls, bits = _class_bits(node, p)
    need = _NEEDED[kind]
    ok = bits & need == need
    chain.append(EvidenceStep(path, check, cls, ok))
    return AccessDecision(ok, tuple(chain))


def within_basedir(path: str, prefixes) -> bool:
    return any(is_under(path, prefix) for prefix in prefixes)


def php_can_access(ctx: ExecutionContext, fs: FsSnapshot, path: str, kind: AccessKind) -> AccessDecision:
    """POSIX decision for the context's identity, then open_basedir, then safe_mode."""
    base = can_access(fs, ctx.identity, path, kind)
    if not base.allowed:
        return base
    chain = list(base.chain)
    r = ctx.restrictions
    if r.basedir is not None:
        ok = within_basedir(path, r.basedir)
        chain.append(EvidenceStep(path, "open_basedir " + ":".join(r.basedir), "open_basedir", ok))
        if not ok:
            return AccessDecision(False, tuple(chain))
    if r.safe_mode:
        ok = fs.nodes[path].owner == r.script_owner
        chain.append(EvidenceStep(path, f"safe_mode owner=={r.script_owner}", "safe_mode", ok))
        if not ok:
            return AccessDecision(False, tuple(chain))
    return AccessDecision(True, tuple(chain))


def descriptor_paths(ctx: ExecutionContext) -> DescriptorPaths:
    # an inherited fd can be reopened through /proc/self/fd regardless of file mode
    readable = frozenset(path for path, _ in ctx.fd_table)
    writable = frozenset(path for path, how in ctx.fd_table if how == "write-append")
    return DescriptorPaths(readable, writable)


def fd_decision(ctx: ExecutionContext, path: str, write: bool) -> AccessDecision:
    """Evidence that ``path`` is reachable through an inherited descriptor."""
    fds = descriptor_paths(ctx)
    ok = path in (fds.writable if write else fds.readable)
    check = "reopen fd for write" if write else "reopen fd for read"
    return AccessDecision(ok, (EvidenceStep(path, check, "fd", ok),))
