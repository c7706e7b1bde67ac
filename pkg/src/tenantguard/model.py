"""Domain types for a shared-hosting server: accounts, filesystem, vhosts, host settings."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional


class Mode(str, Enum):
    """How site scripts are executed by the webserver."""

    APACHE_MODULE = "ApacheModule"
    CGI = "Cgi"
    SUEXEC_CGI = "SuExecCgi"
    SUPHP = "SuPhp"
    PERUSER_MPM = "PeruserMpm"
    ITK_MPM = "ItkMpm"

    def __str__(self) -> str:
        return self.value

    @property
    def runs_as_owner(self) -> bool:
        return self not in (Mode.APACHE_MODULE, Mode.CGI)

    @property
    def spawns_interpreter(self) -> bool:
        # CGI-family: a fresh interpreter per request, no inherited log fds
        return self in (Mode.CGI, Mode.SUEXEC_CGI, Mode.SUPHP)


ISOLATING_MODES = frozenset({Mode.SUEXEC_CGI, Mode.SUPHP, Mode.PERUSER_MPM, Mode.ITK_MPM})


class NodeKind(str, Enum):
    FILE = "file"
    DIR = "dir"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Principal:
    name: str
    uid: int
    gid: int
    groups: frozenset = frozenset()

    def __post_init__(self) -> None:
        # primary gid is always a member
        object.__setattr__(self, "groups", frozenset(self.groups) | {self.gid})

    @property
    def is_superuser(self) -> bool:
        return self.uid == 0


@dataclass(frozen=True)
class FileNode:
    path: str
    kind: NodeKind
    owner: int
    group: int
    mode: int

    @property
    def is_dir(self) -> bool:
        return self.kind is NodeKind.DIR


def is_normalized(path: str) -> bool:
    if not path.startswith("/"):
        return False
    if path == "/":
        return True
    parts = path[1:].split("/")
    return all(p not in ("", ".", "..") for p in parts)


def parent_of(path: str) -> Optional[str]:
    if path == "/":
        return None
    head = path.rsplit("/", 1)[0]
    return head or "/"


def ancestors_of(path: str) -> list[str]:
    """Strict ancestors of ``path``, outermost first (always starts at "/")."""
    out = []
    p = parent_of(path)
    while p is not None:
        out.append(p)
        p = parent_of(p)
    out.reverse()
    return out


def is_under(path: str, prefix: str) -> bool:
    """Component-wise containment; ``/home/a`` does not contain ``/home/ab``."""
    if prefix == "/":
        return True
    return path == prefix or path.startswith(prefix + "/")


@dataclass(frozen=True)
class FsSnapshot:
    nodes: Mapping[str, FileNode] = field(default_factory=dict)

    @classmethod
    def from_nodes(cls, nodes) -> "FsSnapshot":
        return cls({n.path: n for n in nodes})

    def __contains__(self, path: str) -> bool:
        return path in self.nodes

    def get(self, path: str) -> Optional[FileNode]:
        return self.nodes.get(path)

    def is_dir(self, path: str) -> bool:
        node = self.nodes.get(path)
        return node is not None and node.is_dir

    def under(self, prefix: str, include_self: bool = False) -> list[FileNode]:
        """Nodes strictly below ``prefix`` (plus the prefix itself if asked), sorted by path."""
        return [
            self.nodes[p]
            for p in sorted(self.nodes)
            if is_under(p, prefix) and (include_self or p != prefix)
        ]

    def with_nodes(self, *nodes: FileNode) -> "FsSnapshot":
        merged = dict(self.nodes)
        for n in nodes:
            merged[n.path] = n
        return FsSnapshot(merged)

    def without(self, *paths: str) -> "FsSnapshot":
        """Drop the given paths and everything below them."""
        return FsSnapshot(
            {p: n for p, n in self.nodes.items() if not any(is_under(p, r) for r in paths)}
        )


@dataclass(frozen=True)
class SiteAnnotations:
    has_lfi: bool = False
    csrf_in_session: bool = False
    uploads_writable_by_webserver: bool = False


ANNOTATION_KEYS = ("has_lfi", "csrf_in_session", "uploads_writable_by_webserver")


@dataclass(frozen=True)
class Site:
    id: str
    owner: str
    server_name: str
    docroot: str
    error_log: str
    access_log: str
    session_dir: str
    annotations: SiteAnnotations = SiteAnnotations()
    access_log_format: str = "common"
    # vhost lines we do not model, kept so emitted config round-trips
    extra_directives: tuple = ()

    @property
    def logs(self) -> tuple:
        return (self.error_log, self.access_log)


@dataclass(frozen=True)
class HostConfig:
    mode: Mode
    webserver: str
    sites: tuple
    safe_mode: bool = False
    open_basedir: Mapping[str, tuple] = field(default_factory=dict)
    userdir_enabled: bool = False
    local_traffic_filtered: bool = False
    shared_access_log: Optional[str] = None
    recommended_mode: Optional[Mode] = None

    def site(self, site_id: str) -> Site:
        for s in self.sites:
            if s.id == site_id:
                return s
        raise KeyError(site_id)

    def basedir_for(self, site_id: str) -> Optional[tuple]:
        """Configured open_basedir prefixes, or None when unrestricted (missing or empty)."""
        prefixes = self.open_basedir.get(site_id)
        return tuple(prefixes) if prefixes else None


@dataclass(frozen=True)
class Scenario:
    principals: tuple
    fs: FsSnapshot
    host: HostConfig

    def principal(self, name: str) -> Principal:
        for p in self.principals:
            if p.name == name:
                return p
        raise KeyError(name)

    def by_uid(self, uid: int) -> Optional[Principal]:
        for p in self.principals:
            if p.uid == uid:
                return p
        return None

    def group_name(self, gid: int) -> Optional[str]:
        # prefer the account whose uid equals the gid (per-user private groups)
        candidates = sorted(
            (p for p in self.principals if p.gid == gid), key=lambda p: (p.uid != gid, p.uid)
        )
        return candidates[0].name if candidates else None

    def tenant_pairs(self) -> list[tuple]:
        """Ordered (attacker, victim) site pairs belonging to different owners."""
        return [
            (a, b)
            for a in self.host.sites
            for b in self.host.sites
            if a.id != b.id and a.owner != b.owner
        ]

    def tenant_count(self) -> int:
        return len({s.owner for s in self.host.sites})


def validate_scenario(s: Scenario) -> list[str]:
    """Every invariant violation in ``s``, in a stable order. Empty means valid."""
    out: list[str] = []

    names: dict[str, Principal] = {}
    uids: dict[int, str] = {}
    for p in s.principals:
        if p.name in names:
            out.append(f"principal name {p.name!r} is not unique")
        names.setdefault(p.name, p)
        if p.uid in uids:
            out.append(f"uid {p.uid} shared by principals {uids[p.uid]!r} and {p.name!r}")
        uids.setdefault(p.uid, p.name)
        if p.uid < 0 or p.gid < 0 or any(g < 0 for g in p.groups):
            out.append(f"principal {p.name!r} has a negative id")
        if p.uid == 0 and p.name != "root":
            out.append(f"uid 0 is reserved for root, not {p.name!r}")
        if p.name == "root" and p.uid != 0:
            out.append(f"principal 'root' must have uid 0, has {p.uid}")
        if p.gid not in p.groups:
            out.append(f"principal {p.name!r} groups do not contain primary gid {p.gid}")

    primary_gids = {p.gid for p in s.principals}
    nodes = s.fs.nodes
    root = nodes.get("/")
    if root is None or not root.is_dir:
        out.append("filesystem has no root directory '/'")
    for path in sorted(nodes):
        n = nodes[path]
        if n.path != path:
            out.append(f"node keyed {path!r} carries path {n.path!r}")
        if not is_normalized(path):
            out.append(f"path {path!r} is not absolute and normalized")
            continue
        if not isinstance(n.kind, NodeKind):
            out.append(f"{path}: unknown node kind {n.kind!r}")
        if not 0 <= n.mode <= 0o777:
            out.append(f"{path}: mode {n.mode:o} outside 9 permission bits")
        parent = parent_of(path)
        if parent is not None:
            pn = nodes.get(parent)
            if pn is None:
                out.append(f"{path}: parent {parent} missing from filesystem")
            elif not pn.is_dir:
                out.append(f"{path}: parent {parent} is not a directory")
        if n.owner not in uids:
            out.append(f"{path}: owner uid {n.owner} matches no principal")
        if n.group not in primary_gids:
            out.append(f"{path}: group gid {n.group} matches no principal")

    host = s.host
    if not host.sites:
        out.append("host has no sites")
    if host.webserver not in names:
        out.append(f"webserver account {host.webserver!r} is not a principal")
    seen_ids: set = set()
    seen_names: set = set()
    for site in host.sites:
        if site.id in seen_ids:
            out.append(f"site id {site.id!r} is not unique")
        seen_ids.add(site.id)
        if site.server_name in seen_names:
            out.append(f"server name {site.server_name!r} is not unique")
        seen_names.add(site.server_name)
        if site.owner not in names:
            out.append(f"site {site.id}: owner {site.owner!r} is not a principal")
        if site.owner == host.webserver:
            out.append(f"site {site.id}: owner is the webserver account {host.webserver!r}")
        for label, path in (("docroot", site.docroot), ("session_dir", site.session_dir)):
            if not s.fs.is_dir(path):
                out.append(f"site {site.id}: {label} {path} is not a directory in the filesystem")
        for label, path in (("error_log", site.error_log), ("access_log", site.access_log)):
            parent = parent_of(path) if is_normalized(path) else None
            if parent is None or not s.fs.is_dir(parent):
                out.append(f"site {site.id}: {label} {path} has no parent directory")
            elif s.fs.is_dir(path):
                out.append(f"site {site.id}: {label} {path} is a directory")
    for site_id in sorted(host.open_basedir):
        if site_id not in seen_ids:
            out.append(f"open_basedir names unknown site {site_id!r}")
        for prefix in host.open_basedir[site_id]:
            if not is_normalized(prefix):
                out.append(f"open_basedir for {site_id}: {prefix!r} is not a normalized path")
    if host.shared_access_log is not None:
        parent = parent_of(host.shared_access_log) if is_normalized(host.shared_access_log) else None
        if parent is None or not s.fs.is_dir(parent):
            out.append(f"shared_access_log {host.shared_access_log} has no parent directory")
    if host.recommended_mode is not None and host.recommended_mode not in ISOLATING_MODES:
        out.append(f"recommended_mode {host.recommended_mode} does not isolate tenants")
    return out
