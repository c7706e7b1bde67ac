"""Per-site isolation plan: owner-only homes, separate logs and session stores, per-owner execution."""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Any

from .manifest import emit_permissions_lines, emit_vhost_text
from .model import (
    FileNode,
    FsSnapshot,
    Mode,
    NodeKind,
    Scenario,
    is_under,
    parent_of,
)

DEFAULT_MODE = Mode.ITK_MPM
SITE_DIR_MODE = 0o750
HOME_ROOT = "/home"


class ActionKind(str, Enum):
    CREATE_DIR = "create_dir"
    CHOWN = "chown"
    CHMOD = "chmod"
    SET_VHOST_DIRECTIVE = "set_vhost_directive"
    SET_MODE = "set_mode"
    SET_FLAG = "set_flag"

    def __str__(self) -> str:
        return self.value


class RemediationError(ValueError):
    pass


@dataclass(frozen=True)
class RemediationAction:
    id: str
    kind: ActionKind
    target: str
    value: Any = None


@dataclass(frozen=True)
class RemediationPlan:
    actions: tuple
    advisory_notes: tuple = ()
    vhost_text: str = ""
    permissions: tuple = ()  # manifest lines for every site's isolated dirs, "" between sites
    settings_changes: tuple = ()

    def __bool__(self) -> bool:
        return bool(self.actions)

    def action_ids(self) -> list:
        return [a.id for a in self.actions]


# vhost directive name -> (Site attribute or None for open_basedir)
_VHOST_FIELDS = {
    "ErrorLog": "error_log",
    "CustomLog": "access_log",
    "session.save_path": "session_dir",
    "open_basedir": None,
}


def site_layout(site_id: str) -> dict:
    home = f"{HOME_ROOT}/{site_id}"
    return {
        "home": home,
        "log": f"{home}/log",
        "session": f"{home}/session",
        "error_log": f"{home}/log/error_log",
        "access_log": f"{home}/log/access_log",
    }


def _owns_docroot(s: Scenario, site) -> bool:
    # a docroot shared with, or enclosing, another site's area is left alone
    for other in s.host.sites:
        if other.id == site.id:
            continue
        if other.docroot == site.docroot or is_under(site_layout(other.id)["home"], site.docroot):
            return False
    return True


def _advisory(target: Mode, overridden: bool) -> tuple:
    notes = []
    if overridden:
        notes.append(f"execution mode {target.value} taken from the recommended_mode setting")
    else:
        notes.append(
            "ItkMpm: every request is served by a short-lived handler running as the site "
            "owner; PeruserMpm isolates equally but keeps a pool of idle workers per site "
            "and costs more memory"
        )
    notes.append(
        "SuExecCgi and SuPhp also run scripts as the owner but start a CGI interpreter for "
        "each request and are markedly slower under load"
    )
    notes.append(
        "open_basedir keeps each site's scripts inside its home; without it a world-writable "
        "directory such as /tmp still lets a tenant plant files for an LFI-vulnerable neighbour"
    )
    notes.append(
        "local_traffic_filtered only records intent: route loopback HTTP through the WAF/NIDPS "
        "so co-tenant requests face the same rate limits as remote ones"
    )
    notes.append(
        "mode change is mandatory: 750 owner-group directories are unreadable to a shared "
        "webserver account"
    )
    return tuple(notes)


def plan_actions(s: Scenario) -> list:
    fs = s.fs
    host = s.host
    target_mode = host.recommended_mode or DEFAULT_MODE
    actions: list = []
    created: set = set()

    def ensure_dir(path: str) -> None:
        if fs.is_dir(path) or path in created:
            return
        parent = parent_of(path)
        if parent is not None:
            ensure_dir(parent)
        actions.append(RemediationAction(f"fs:mkdir:{path}", ActionKind.CREATE_DIR, path))
        created.add(path)

    for site in host.sites:
        owner = s.principal(site.owner)
        group = s.group_name(owner.gid) or str(owner.gid)
        want = f"{owner.name}:{group}"
        lay = site_layout(site.id)
        for d in (lay["home"], lay["log"], lay["session"]):
            ensure_dir(d)

        targets = [lay["home"]]
        if _owns_docroot(s, site) and site.docroot not in targets:
            targets.append(site.docroot)
        targets += [lay["log"], lay["session"]]
        for path in targets:
            node = fs.get(path)
            if path in created or node is None:
                cur_owner, cur_group, cur_mode = 0, 0, 0o755
            else:
                cur_owner, cur_group, cur_mode = node.owner, node.group, node.mode
            if (cur_owner, cur_group) != (owner.uid, owner.gid):
                actions.append(RemediationAction(f"fs:chown:{path}", ActionKind.CHOWN, path, want))
            if cur_mode != SITE_DIR_MODE:
                actions.append(RemediationAction(f"fs:chmod:{path}", ActionKind.CHMOD, path, f"{SITE_DIR_MODE:o}"))

        wanted = [
            ("ErrorLog", site.error_log, lay["error_log"]),
            ("CustomLog", site.access_log, lay["access_log"]),
            ("session.save_path", site.session_dir, lay["session"]),
            ("open_basedir", host.basedir_for(site.id), (lay["home"],)),
        ]
        for name, current, value in wanted:
            if current != value:
                actions.append(
                    RemediationAction(f"vhost:{site.id}:{name}", ActionKind.SET_VHOST_DIRECTIVE, site.id, (name, value))
                )

    if host.mode is not target_mode:
        actions.append(RemediationAction("host:mode", ActionKind.SET_MODE, "mode", target_mode.value))
    if not host.local_traffic_filtered:
        actions.append(RemediationAction("host:local_traffic_filtered", ActionKind.SET_FLAG, "local_traffic_filtered", True))
    if host.userdir_enabled:
        actions.append(RemediationAction("host:userdir_enabled", ActionKind.SET_FLAG, "userdir_enabled", False))
    if host.shared_access_log is not None:
        actions.append(RemediationAction("host:shared_access_log", ActionKind.SET_FLAG, "shared_access_log", None))
    return actions


def _settings_changes(actions) -> tuple:
    out = []
    for a in actions:
        if a.kind is ActionKind.SET_MODE:
            out.append(f"mode = {a.value}")
        elif a.kind is ActionKind.SET_FLAG:
            if a.value is None:
                out.append(f"# remove: {a.target}")
            else:
                out.append(f"{a.target} = {'true' if a.value else 'false'}")
    return tuple(out)


def isolated_permission_lines(s: Scenario) -> tuple:
    lines: list = []
    for site in s.host.sites:
        lay = site_layout(site.id)
        paths = list(dict.fromkeys([lay["home"], site.docroot, lay["log"], lay["session"]]))
        nodes = [s.fs.get(p) for p in paths if s.fs.get(p) is not None]
        if lines:
            lines.append("")
        lines.extend(emit_permissions_lines(nodes, s.principals, order="given"))
    return tuple(lines)


def plan_remediation(s: Scenario) -> RemediationPlan:
    """Ordered actions that isolate every site, omitting those already satisfied."""
    actions = tuple(plan_actions(s))
    fixed = apply_plan(s, RemediationPlan(actions))
    return RemediationPlan(
        actions=actions,
        advisory_notes=_advisory(fixed.host.mode, s.host.recommended_mode is not None),
        vhost_text=emit_vhost_text(fixed.host.sites, fixed.host.open_basedir),
        permissions=isolated_permission_lines(fixed),
        settings_changes=_settings_changes(actions),
    )


def _resolve_owner(s: Scenario, value: str) -> tuple:
    user, _, group = value.partition(":")
    try:
        uid = s.principal(user).uid
    except KeyError:
        raise RemediationError(f"chown names unknown account {user!r}") from None
    gids = [p.gid for p in s.principals if p.name == group]
    if not gids:
        if not group.isdigit():
            raise RemediationError(f"chown names unknown group {group!r}")
        return uid, int(group)
    return uid, gids[0]


def apply_plan(s: Scenario, plan: RemediationPlan) -> Scenario:
    """A new scenario with the plan's actions applied in order; ``s`` is untouched."""
    nodes = dict(s.fs.nodes)
    host = s.host
    sites = {site.id: site for site in host.sites}
    basedir = {k: tuple(v) for k, v in host.open_basedir.items()}
    host_changes: dict = {}

    for a in plan.actions:
        if a.kind is ActionKind.CREATE_DIR:
            existing = nodes.get(a.target)
            if existing is not None:
                if not existing.is_dir:
                    raise RemediationError(f"{a.id}: {a.target} exists and is not a directory")
                continue
            parent = parent_of(a.target)
            if parent is None or parent not in nodes or not nodes[parent].is_dir:
                raise RemediationError(f"{a.id}: parent of {a.target} does not exist yet")
            nodes[a.target] = FileNode(a.target, NodeKind.DIR, 0, 0, 0o755)
        elif a.kind in (ActionKind.CHOWN, ActionKind.CHMOD):
            node = nodes.get(a.target)
            if node is None:
                raise RemediationError(f"{a.id}: {a.target} does not exist")
            if a.kind is ActionKind.CHOWN:
                uid, gid = _resolve_owner(s, a.value)
                nodes[a.target] = replace(node, owner=uid, group=gid)
            else:
                nodes[a.target] = replace(node, mode=int(a.value, 8))
        elif a.kind is ActionKind.SET_VHOST_DIRECTIVE:
            if a.target not in sites:
                raise RemediationError(f"{a.id}: no site {a.target!r}")
            name, value = a.value
            attr = _VHOST_FIELDS.get(name, "")
            if attr is None:
                if value:
                    basedir[a.target] = tuple(value)
                else:
                    basedir.pop(a.target, None)
            elif attr:
                sites[a.target] = replace(sites[a.target], **{attr: value})
            else:
                raise RemediationError(f"{a.id}: unsupported directive {name!r}")
        elif a.kind is ActionKind.SET_MODE:
            host_changes["mode"] = Mode(a.value)
        elif a.kind is ActionKind.SET_FLAG:
            if a.target not in ("local_traffic_filtered", "userdir_enabled", "shared_access_log", "safe_mode"):
                raise RemediationError(f"{a.id}: unknown host flag {a.target!r}")
            host_changes[a.target] = a.value
        else:
            raise RemediationError(f"{a.id}: unknown action kind {a.kind!r}")

    new_host = replace(
        host,
        sites=tuple(sites[site.id] for site in host.sites),
        open_basedir=basedir,
        **host_changes,
    )
    return Scenario(s.principals, FsSnapshot(nodes), new_host)


def _shell_line(a: RemediationAction) -> str:
    if a.kind is ActionKind.CREATE_DIR:
        return f"mkdir {a.target}"
    if a.kind is ActionKind.CHOWN:
        return f"chown {a.value} {a.target}"
    return f"chmod {a.value} {a.target}"


def emit_remediation_script(plan: RemediationPlan) -> str:
    out = ["# tenantguard remediation plan"]
    if not plan.actions:
        out.append("# no actions: every site is already isolated")
        return "\n".join(out) + "\n"
    out.append(f"# {len(plan.actions)} action(s)")
    out.append("")
    out.append("# --- filesystem ---")
    fs_actions = [a for a in plan.actions if a.kind in (ActionKind.CREATE_DIR, ActionKind.CHOWN, ActionKind.CHMOD)]
    out.extend(_shell_line(a) for a in fs_actions)
    if not fs_actions:
        out.append("# (no filesystem changes)")
    out.append("# resulting per-site permissions:")
    out.extend(f"#   {line}" if line else "#" for line in plan.permissions)
    out.append("")
    out.append("# --- vhosts.conf (regenerated) ---")
    out.append(plan.vhost_text.rstrip("\n"))
    out.append("")
    out.append("# --- host.settings changes ---")
    out.extend(plan.settings_changes or ("# (none)",))
    if plan.advisory_notes:
        out.append("")
        out.append("# --- notes ---")
        out.extend(f"# {note}" for note in plan.advisory_notes)
    return "\n".join(out) + "\n"
