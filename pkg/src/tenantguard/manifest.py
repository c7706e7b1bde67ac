"""Text artifacts describing a hosting server, and assembly into a Scenario.

A scenario directory holds four UTF-8 files:

* ``fs.manifest``          one node per line, ``d rwx r-x --- owner:group /path``
* ``vhosts.conf``          ``<VirtualHost *:80>`` blocks (Apache subset)
* ``host.settings``        ``key = value`` plus ``site`` and ``annotate`` lines
* ``principals.settings``  ``name uid gid [g1,g2,...]``
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .model import (
    ANNOTATION_KEYS,
    FileNode,
    FsSnapshot,
    HostConfig,
    Mode,
    NodeKind,
    Principal,
    Scenario,
    Site,
    SiteAnnotations,
    is_normalized,
    validate_scenario,
)

FS_MANIFEST = "fs.manifest"
VHOSTS_CONF = "vhosts.conf"
HOST_SETTINGS = "host.settings"
PRINCIPALS_SETTINGS = "principals.settings"
SCENARIO_FILES = (FS_MANIFEST, VHOSTS_CONF, HOST_SETTINGS, PRINCIPALS_SETTINGS)


class ParseError(ValueError):
    def __init__(self, lineno: int, message: str, source: str = ""):
        self.lineno = lineno
        self.message = message
        self.source = source
        where = f"{source}:" if source else ""
        super().__init__(f"{where}line {lineno}: {message}")


class ScenarioError(Exception):
    """A scenario directory could not be loaded."""

    def __init__(self, message: str, violations=()):
        self.violations = list(violations)
        super().__init__(message)


def _content_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line and not line.startswith("#"):
            yield lineno, line


# ---- permissions manifest ---------------------------------------------------

_TRIPLE = "[r-][w-][x-]"
_SPACED = re.compile(rf"^([d-])\s+({_TRIPLE})\s+({_TRIPLE})\s+({_TRIPLE})\s+(.+)$")
_COMPACT = re.compile(rf"^([d-])({_TRIPLE})({_TRIPLE})({_TRIPLE})\s+(.+)$")


@dataclass(frozen=True)
class ManifestEntry:
    """A manifest line before account names are resolved to ids."""

    kind: NodeKind
    mode: int
    owner: str
    group: str
    path: str


def _triple_bits(t: str) -> int:
    return (4 if t[0] == "r" else 0) | (2 if t[1] == "w" else 0) | (1 if t[2] == "x" else 0)


def _triple_text(bits: int) -> str:
    return ("r" if bits & 4 else "-") + ("w" if bits & 2 else "-") + ("x" if bits & 1 else "-")


def format_mode(kind: NodeKind, mode: int) -> str:
    return " ".join(
        ["d" if kind is NodeKind.DIR else "-"]
        + [_triple_text((mode >> shift) & 7) for shift in (6, 3, 0)]
    )


def parse_permissions_manifest(text: str) -> list:
    entries = []
    for lineno, line in _content_lines(text):
        m = _SPACED.match(line) or _COMPACT.match(line)
        if m is None:
            raise ParseError(lineno, f"malformed mode in {line!r}", FS_MANIFEST)
        kind_char, u, g, o, rest = m.groups()
        parts = rest.split()
        if len(parts) != 2:
            raise ParseError(lineno, "expected '<owner>:<group> <path>' after the mode", FS_MANIFEST)
        who, path = parts
        if who.count(":") != 1:
            raise ParseError(lineno, f"expected owner:group, got {who!r}", FS_MANIFEST)
        owner, group = who.split(":")
        if not owner or not group:
            raise ParseError(lineno, f"empty owner or group in {who!r}", FS_MANIFEST)
        if not path.startswith("/"):
            raise ParseError(lineno, f"path {path!r} is not absolute", FS_MANIFEST)
        if not is_normalized(path):
            raise ParseError(lineno, f"path {path!r} is not normalized", FS_MANIFEST)
        mode = (_triple_bits(u) << 6) | (_triple_bits(g) << 3) | _triple_bits(o)
        kind = NodeKind.DIR if kind_char == "d" else NodeKind.FILE
        entries.append(ManifestEntry(kind, mode, owner, group, path))
    return entries


def _lookup_id(name: str, table: dict, what: str) -> int:
    if name in table:
        return table[name]
    if name.isdigit():
        return int(name)
    raise ScenarioError(f"{FS_MANIFEST}: unknown {what} {name!r}")


def resolve_entries(entries, principals) -> list:
    """Turn named manifest entries into FileNodes using the account table."""
    uids = {p.name: p.uid for p in principals}
    gids = {p.name: p.gid for p in principals}
    nodes = []
    seen = set()
    for e in entries:
        if e.path in seen:
            raise ScenarioError(f"{FS_MANIFEST}: duplicate path {e.path}")
        seen.add(e.path)
        nodes.append(
            FileNode(e.path, e.kind, _lookup_id(e.owner, uids, "owner"), _lookup_id(e.group, gids, "group"), e.mode)
        )
    return nodes


def manifest_line(node: FileNode, owner: str, group: str) -> str:
    return f"{format_mode(node.kind, node.mode)} {owner}:{group} {node.path}"


def _names_for(principals):
    users = {p.uid: p.name for p in principals}
    groups: dict = {}
    for p in sorted(principals, key=lambda p: (p.uid != p.gid, p.uid)):
        groups.setdefault(p.gid, p.name)
    return users, groups


def emit_permissions_lines(nodes, principals, order: str = "path") -> list:
    users, groups = _names_for(principals)
    ordered = sorted(nodes, key=lambda n: n.path) if order == "path" else list(nodes)
    lines = []
    for n in ordered:
        if n.owner not in users:
            raise ScenarioError(f"uid {n.owner} of {n.path} has no account name")
        if n.group not in groups:
            raise ScenarioError(f"gid {n.group} of {n.path} has no group name")
        lines.append(manifest_line(n, users[n.owner], groups[n.group]))
    return lines


def emit_permissions_manifest(nodes, principals) -> str:
    lines = emit_permissions_lines(nodes, principals)
    return "".join(line + "\n" for line in lines)


# ---- vhosts -----------------------------------------------------------------

_OPEN = re.compile(r"^<VirtualHost\s+([^>]+)>$", re.IGNORECASE)
_CLOSE = re.compile(r"^</VirtualHost>$", re.IGNORECASE)


@dataclass
class VhostDirective:
    name: str
    value: str
    extra: Optional[str] = None


@dataclass
class VhostBlock:
    """Fields gathered from one ``<VirtualHost>`` block; unset ones stay None."""

    line: int
    server_name: Optional[str] = None
    docroot: Optional[str] = None
    error_log: Optional[str] = None
    access_log: Optional[str] = None
    access_log_format: str = "common"
    session_dir: Optional[str] = None
    open_basedir: Optional[tuple] = None
    extra: list = field(default_factory=list)


_FIELD_FOR = {
    "DocumentRoot": "docroot",
    "ServerName": "server_name",
    "ErrorLog": "error_log",
    "CustomLog": "access_log",
    "php_value session.save_path": "session_dir",
    "php_admin_value open_basedir": "open_basedir",
}
SUPPORTED_DIRECTIVES = tuple(_FIELD_FOR)


def _directive(tokens: list) -> Optional[VhostDirective]:
    head = tokens[0]
    for name in ("DocumentRoot", "ServerName", "ErrorLog"):
        if head.lower() == name.lower():
            if len(tokens) != 2:
                raise ValueError(f"{name} takes exactly one argument")
            return VhostDirective(name, tokens[1])
    if head.lower() == "customlog":
        if len(tokens) not in (2, 3):
            raise ValueError("CustomLog takes a path and an optional format")
        return VhostDirective("CustomLog", tokens[1], tokens[2] if len(tokens) == 3 else None)
    if len(tokens) >= 2 and head.lower() in ("php_value", "php_admin_value"):
        key = f"{head.lower()} {tokens[1]}"
        if key in ("php_value session.save_path", "php_admin_value open_basedir"):
            if len(tokens) != 3:
                raise ValueError(f"{key} takes exactly one value")
            return VhostDirective(key, tokens[2])
    return None


def parse_vhost_text(text: str) -> list:
    blocks = []
    current: Optional[VhostBlock] = None
    seen: set = set()
    for lineno, line in _content_lines(text):
        if _OPEN.match(line):
            if current is not None:
                raise ParseError(lineno, f"nested <VirtualHost> inside block opened at line {current.line}", VHOSTS_CONF)
            addr = _OPEN.match(line).group(1).strip()
            if not addr.endswith(":80"):
                raise ParseError(lineno, f"only port-80 virtual hosts are supported, got {addr!r}", VHOSTS_CONF)
            current = VhostBlock(line=lineno)
            seen = set()
            continue
        if _CLOSE.match(line):
            if current is None:
                raise ParseError(lineno, "</VirtualHost> without an opening block", VHOSTS_CONF)
            blocks.append(current)
            current = None
            continue
        if current is None:
            raise ParseError(lineno, f"directive outside <VirtualHost>: {line!r}", VHOSTS_CONF)
        try:
            d = _directive(line.split())
        except ValueError as exc:
            raise ParseError(lineno, str(exc), VHOSTS_CONF) from None
        if d is None:
            current.extra.append(line)
            continue
        if d.name in seen:
            raise ParseError(lineno, f"duplicate {d.name} in block opened at line {current.line}", VHOSTS_CONF)
        seen.add(d.name)
        attr = _FIELD_FOR[d.name]
        if attr == "open_basedir":
            setattr(current, attr, tuple(p for p in d.value.split(":") if p))
        else:
            setattr(current, attr, d.value)
        if d.name == "CustomLog" and d.extra:
            current.access_log_format = d.extra
    if current is not None:
        raise ParseError(current.line, "<VirtualHost *:80> is never closed", VHOSTS_CONF)
    return blocks


def vhost_block_lines(site: Site, basedir=None) -> list:
    lines = [
        "<VirtualHost *:80>",
        f"  DocumentRoot {site.docroot}",
        f"  ServerName {site.server_name}",
        f"  ErrorLog {site.error_log}",
        f"  CustomLog {site.access_log} {site.access_log_format}",
        f"  php_value session.save_path {site.session_dir}",
    ]
    if basedir:
        lines.append(f"  php_admin_value open_basedir {':'.join(basedir)}")
    lines.extend(f"  {x}" for x in site.extra_directives)
    lines.append("</VirtualHost>")
    return lines


def emit_vhost_text(sites, basedir=None) -> str:
    basedir = basedir or {}
    blocks = ["\n".join(vhost_block_lines(s, basedir.get(s.id))) + "\n" for s in sites]
    return "\n".join(blocks)


# ---- host.settings ----------------------------------------------------------

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _parse_bool(value: str, lineno: int) -> bool:
    v = value.lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise ParseError(lineno, f"expected a boolean, got {value!r}", HOST_SETTINGS)


def _parse_mode(value: str, lineno: int) -> Mode:
    try:
        return Mode(value)
    except ValueError:
        choices = ", ".join(m.value for m in Mode)
        raise ParseError(lineno, f"unknown mode {value!r} (expected one of {choices})", HOST_SETTINGS) from None


@dataclass
class HostSettings:
    mode: Optional[Mode] = None
    webserver: Optional[str] = None
    safe_mode: bool = False
    userdir_enabled: bool = False
    local_traffic_filtered: bool = False
    shared_access_log: Optional[str] = None
    recommended_mode: Optional[Mode] = None
    owners: dict = field(default_factory=dict)
    annotations: dict = field(default_factory=dict)  # site -> {key: bool}


_BOOL_KEYS = ("safe_mode", "userdir_enabled", "local_traffic_filtered")


def parse_host_settings(text: str) -> HostSettings:
    hs = HostSettings()
    seen = set()
    for lineno, line in _content_lines(text):
        words = line.split()
        if words[0] in ("site", "annotate"):
            if len(words) != 3 or words[2].count("=") != 1:
                raise ParseError(lineno, f"expected '{words[0]} <site> <key>=<value>'", HOST_SETTINGS)
            site, kv = words[1], words[2]
            key, value = kv.split("=")
            if words[0] == "site":
                if key != "owner" or not value:
                    raise ParseError(lineno, f"unknown site property {key!r}", HOST_SETTINGS)
                hs.owners[site] = value
            else:
                if key not in ANNOTATION_KEYS:
                    raise ParseError(lineno, f"unknown annotation {key!r}", HOST_SETTINGS)
                hs.annotations.setdefault(site, {})[key] = _parse_bool(value, lineno)
            continue
        if "=" not in line:
            raise ParseError(lineno, f"expected 'key = value', got {line!r}", HOST_SETTINGS)
        key, value = (x.strip() for x in line.split("=", 1))
        if key in seen:
            raise ParseError(lineno, f"duplicate setting {key!r}", HOST_SETTINGS)
        seen.add(key)
        if key == "mode":
            hs.mode = _parse_mode(value, lineno)
        elif key == "recommended_mode":
            hs.recommended_mode = _parse_mode(value, lineno)
        elif key == "webserver":
            hs.webserver = value
        elif key in _BOOL_KEYS:
            setattr(hs, key, _parse_bool(value, lineno))
        elif key == "shared_access_log":
            hs.shared_access_log = value or None
        else:
            raise ParseError(lineno, f"unknown setting {key!r}", HOST_SETTINGS)
    return hs


def _bool_text(v: bool) -> str:
    return "true" if v else "false"


def emit_host_settings(host: HostConfig) -> str:
    lines = [
        f"mode = {host.mode.value}",
        f"webserver = {host.webserver}",
        f"safe_mode = {_bool_text(host.safe_mode)}",
        f"userdir_enabled = {_bool_text(host.userdir_enabled)}",
        f"local_traffic_filtered = {_bool_text(host.local_traffic_filtered)}",
    ]
    if host.shared_access_log:
        lines.append(f"shared_access_log = {host.shared_access_log}")
    if host.recommended_mode is not None:
        lines.append(f"recommended_mode = {host.recommended_mode.value}")
    for s in host.sites:
        lines.append(f"site {s.id} owner={s.owner}")
    for s in host.sites:
        for key in ANNOTATION_KEYS:
            if getattr(s.annotations, key):
                lines.append(f"annotate {s.id} {key}=true")
    return "".join(line + "\n" for line in lines)


# ---- principals.settings ----------------------------------------------------

def parse_principals(text: str) -> list:
    out = []
    for lineno, line in _content_lines(text):
        words = line.split()
        if len(words) not in (3, 4):
            raise ParseError(lineno, "expected 'name uid gid [g1,g2,...]'", PRINCIPALS_SETTINGS)
        name, uid, gid = words[:3]
        try:
            groups = set()
            if len(words) == 4:
                inner = words[3].strip("[]")
                groups = {int(g) for g in inner.split(",") if g}
            p = Principal(name, int(uid), int(gid), frozenset(groups))
        except ValueError:
            raise ParseError(lineno, f"non-numeric id in {line!r}", PRINCIPALS_SETTINGS) from None
        out.append(p)
    return out


def emit_principals(principals) -> str:
    lines = []
    for p in principals:
        line = f"{p.name} {p.uid} {p.gid}"
        if p.groups != {p.gid}:
            line += " " + ",".join(str(g) for g in sorted(p.groups))
        lines.append(line)
    return "".join(line + "\n" for line in lines)


# ---- scenario directories ---------------------------------------------------

def _read(directory: Path, name: str) -> str:
    path = directory / name
    if not path.is_file():
        raise ScenarioError(f"missing {name} in {directory}")
    try:
        return path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ScenarioError(f"{name}: not valid UTF-8 ({exc.reason})") from None


def assemble_scenario(fs_text: str, vhost_text: str, settings_text: str, principals_text: str) -> Scenario:
    """Build a Scenario from the four texts without validating it."""
    principals = parse_principals(principals_text)
    nodes = resolve_entries(parse_permissions_manifest(fs_text), principals)
    blocks = parse_vhost_text(vhost_text)
    hs = parse_host_settings(settings_text)

    if hs.mode is None:
        raise ScenarioError(f"{HOST_SETTINGS}: 'mode' is not set")
    if hs.webserver is None:
        raise ScenarioError(f"{HOST_SETTINGS}: 'webserver' is not set")

    sites = []
    basedir = {}
    for b in blocks:
        missing = [
            label
            for label, value in (
                ("ServerName", b.server_name),
                ("DocumentRoot", b.docroot),
                ("ErrorLog", b.error_log),
                ("CustomLog", b.access_log),
            )
            if value is None
        ]
        if missing:
            raise ScenarioError(f"{VHOSTS_CONF}: block at line {b.line} lacks {', '.join(missing)}")
        site_id = b.server_name
        if site_id not in hs.owners:
            raise ScenarioError(f"{HOST_SETTINGS}: no 'site {site_id} owner=...' line")
        ann = hs.annotations.get(site_id, {})
        sites.append(
            Site(
                id=site_id,
                owner=hs.owners[site_id],
                server_name=b.server_name,
                docroot=b.docroot,
                error_log=b.error_log,
                access_log=b.access_log,
                # PHP's compiled-in default save path
                session_dir=b.session_dir or "/tmp",
                annotations=SiteAnnotations(**ann),
                access_log_format=b.access_log_format,
                extra_directives=tuple(b.extra),
            )
        )
        if b.open_basedir:
            basedir[site_id] = b.open_basedir
    known = {s.id for s in sites}
    for name in sorted(set(hs.owners) | set(hs.annotations)):
        if name not in known:
            raise ScenarioError(f"{HOST_SETTINGS}: site {name!r} has no virtual host")

    host = HostConfig(
        mode=hs.mode,
        webserver=hs.webserver,
        sites=tuple(sites),
        safe_mode=hs.safe_mode,
        open_basedir=basedir,
        userdir_enabled=hs.userdir_enabled,
        local_traffic_filtered=hs.local_traffic_filtered,
        shared_access_log=hs.shared_access_log,
        recommended_mode=hs.recommended_mode,
    )
    return Scenario(tuple(principals), FsSnapshot.from_nodes(nodes), host)


def read_scenario(directory) -> Scenario:
    directory = Path(directory)
    if not directory.is_dir():
        raise ScenarioError(f"scenario directory {directory} does not exist")
    texts = [_read(directory, name) for name in SCENARIO_FILES]
    return assemble_scenario(*texts)


def load_scenario(directory) -> Scenario:
    """Read and validate a scenario directory; raises ScenarioError listing violations."""
    s = read_scenario(directory)
    violations = validate_scenario(s)
    if violations:
        raise ScenarioError(f"{directory}: {len(violations)} invariant violation(s)", violations)
    return s


def scenario_texts(s: Scenario) -> dict:
    return {
        FS_MANIFEST: emit_permissions_manifest(s.fs.nodes.values(), s.principals),
        VHOSTS_CONF: emit_vhost_text(s.host.sites, s.host.open_basedir),
        HOST_SETTINGS: emit_host_settings(s.host),
        PRINCIPALS_SETTINGS: emit_principals(s.principals),
    }


def save_scenario(s: Scenario, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, text in scenario_texts(s).items():
        (directory / name).write_text(text, encoding="utf-8")
