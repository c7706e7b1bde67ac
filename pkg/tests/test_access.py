import random
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tenantguard.access import (
    AccessError,
    AccessKind,
    build_exec_context,
    can_access,
    descriptor_paths,
    exec_identity,
    php_can_access,
)
from tenantguard.model import FileNode, FsSnapshot, Mode, NodeKind, Principal

from oracles import naive_access_oracle
from scenario_gen import random_access_case, random_scenario


def _with_mode(s, mode):
    return replace(s, host=replace(s.host, mode=mode))


@pytest.mark.parametrize(
    "mode, site, expected",
    [
        (Mode.APACHE_MODULE, "website1", "www-data"),
        (Mode.CGI, "website1", "www-data"),
        (Mode.SUEXEC_CGI, "website2", "web2"),
        (Mode.SUPHP, "website2", "web2"),
        (Mode.PERUSER_MPM, "website1", "web1"),
        (Mode.ITK_MPM, "website1", "web1"),
    ],
)
def test_exec_identity(default_scenario, mode, site, expected):
    s = _with_mode(default_scenario, mode)
    assert exec_identity(s.host, s.host.site(site), s.principals).name == expected


def test_module_context_inherits_shared_logs(default_scenario):
    ctx = build_exec_context(default_scenario, default_scenario.host.site("website1"))
    paths = [p for p, _ in ctx.fd_table]
    assert "/var/log/apache/access_log" in paths
    assert "/var/log/apache/error_log" in paths
    # both sites log to the same files, so both sites' logs are held
    for site in default_scenario.host.sites:
        assert set(site.logs) <= set(paths)


@pytest.mark.parametrize("mode", [Mode.CGI, Mode.SUEXEC_CGI, Mode.SUPHP])
def test_cgi_family_inherits_nothing(default_scenario, mode):
    s = _with_mode(default_scenario, mode)
    ctx = build_exec_context(s, s.host.site("website1"))
    assert ctx.fd_table == ()
    fds = descriptor_paths(ctx)
    assert fds.readable == fds.writable == frozenset()


def test_itk_context_holds_only_own_logs(secure_scenario):
    ctx = build_exec_context(secure_scenario, secure_scenario.host.site("website1"))
    assert ctx.fd_table == (
        ("/home/website1/log/error_log", "write-append"),
        ("/home/website1/log/access_log", "write-append"),
    )
    assert descriptor_paths(ctx).writable == {
        "/home/website1/log/error_log",
        "/home/website1/log/access_log",
    }


def test_itk_ignores_shared_access_log(secure_scenario):
    s = replace(secure_scenario, host=replace(secure_scenario.host, shared_access_log="/var/log/apache/error_log"))
    ctx = build_exec_context(s, s.host.site("website2"))
    assert [p for p, _ in ctx.fd_table] == ["/home/website2/log/error_log", "/home/website2/log/access_log"]


def test_restrictions_carried(default_scenario):
    s = replace(
        default_scenario,
        host=replace(default_scenario.host, safe_mode=True, open_basedir={"website1": ("/home/website1",)}),
    )
    r1 = build_exec_context(s, s.host.site("website1")).restrictions
    r2 = build_exec_context(s, s.host.site("website2")).restrictions
    assert (r1.safe_mode, r1.basedir, r1.script_owner) == (True, ("/home/website1",), 1001)
    assert r2.basedir is None
    assert r2.script_owner == 1002


def test_webserver_reads_group_docroot(default_scenario):
    www = default_scenario.principal("www-data")
    d = can_access(default_scenario.fs, www, "/home/website1/public_html", AccessKind.READ)
    assert d.allowed
    assert d.chain[-1].cls == "group"
    assert [s.path for s in d.chain] == ["/", "/home", "/home/website1", "/home/website1/public_html"]


def test_isolated_layout_blocks_neighbour(secure_scenario):
    web2 = secure_scenario.principal("web2")
    d = can_access(secure_scenario.fs, web2, "/home/website1/session", AccessKind.READ)
    assert not d.allowed
    last = d.chain[-1]
    assert (last.path, last.check, last.cls, last.outcome) == ("/home/website1", "traverse", "other", False)


def test_superuser_writes_anything(secure_scenario):
    root = secure_scenario.principal("root")
    d = can_access(secure_scenario.fs, root, "/home/website2/session/sess_def456", AccessKind.WRITE)
    assert d.allowed
    assert {s.cls for s in d.chain} == {"superuser"}


def test_errors():
    fs = FsSnapshot.from_nodes(
        [FileNode("/", NodeKind.DIR, 0, 0, 0o755), FileNode("/f", NodeKind.FILE, 0, 0, 0o644)]
    )
    p = Principal("u", 5, 5)
    with pytest.raises(AccessError):
        can_access(fs, p, "/missing", AccessKind.READ)
    with pytest.raises(AccessError):
        can_access(fs, p, "/f", AccessKind.CREATE_IN)


def test_class_is_first_match_not_best_match():
    # owner bits apply even when group/other would grant more
    fs = FsSnapshot.from_nodes(
        [FileNode("/", NodeKind.DIR, 0, 0, 0o755), FileNode("/f", NodeKind.FILE, 5, 5, 0o077)]
    )
    assert not can_access(fs, Principal("u", 5, 5), "/f", AccessKind.READ).allowed
    assert can_access(fs, Principal("v", 6, 5), "/f", AccessKind.READ).allowed


def test_php_module_mode_reads_neighbour_config(default_scenario):
    ctx = build_exec_context(default_scenario, default_scenario.host.site("website1"))
    d = php_can_access(ctx, default_scenario.fs, "/home/website2/public_html/config.php", AccessKind.READ)
    assert d.allowed


def test_php_open_basedir_denies(default_scenario):
    s = replace(default_scenario, host=replace(default_scenario.host, open_basedir={"website1": ("/home/website1",)}))
    ctx = build_exec_context(s, s.host.site("website1"))
    d = php_can_access(ctx, s.fs, "/home/website2/public_html/config.php", AccessKind.READ)
    assert not d.allowed
    assert d.chain[-1].cls == "open_basedir"


def test_php_safe_mode_denies_foreign_owner(default_scenario):
    s = replace(default_scenario, host=replace(default_scenario.host, safe_mode=True))
    ctx = build_exec_context(s, s.host.site("website1"))
    d = php_can_access(ctx, s.fs, "/home/website2/public_html/config.php", AccessKind.READ)
    assert not d.allowed
    assert d.chain[-1].cls == "safe_mode"
    own = php_can_access(ctx, s.fs, "/home/website1/public_html/config.php", AccessKind.READ)
    assert own.allowed


def test_basedir_prefix_is_component_wise(default_scenario):
    fs = default_scenario.fs.with_nodes(
        FileNode("/home/website1evil", NodeKind.DIR, 0, 0, 0o755),
        FileNode("/home/website1evil/x", NodeKind.FILE, 0, 0, 0o644),
    )
    s = replace(default_scenario, fs=fs, host=replace(default_scenario.host, open_basedir={"website1": ("/home/website1",)}))
    ctx = build_exec_context(s, s.host.site("website1"))
    assert not php_can_access(ctx, fs, "/home/website1evil/x", AccessKind.READ).allowed


def test_randomized_agreement_with_oracle():
    rng = random.Random(11)
    checked = 0
    for _ in range(60):
        s = random_scenario(rng)
        for _ in range(40):
            p, path, kind = random_access_case(rng, s)
            assert can_access(s.fs, p, path, kind).allowed == naive_access_oracle(s.fs, p, path, kind)
            checked += 1
    assert checked == 2400


def test_oracle_agrees_on_spec_examples(default_scenario):
    www = default_scenario.principal("www-data")
    root = default_scenario.principal("root")
    assert naive_access_oracle(default_scenario.fs, www, "/home/website1/public_html", "Read")
    assert naive_access_oracle(default_scenario.fs, root, "/var/log/apache/access_log", "Write")


def test_chains_replay_on_random_cases():
    rng = random.Random(12)
    for _ in range(30):
        s = random_scenario(rng)
        for _ in range(20):
            p, path, kind = random_access_case(rng, s)
            assert can_access(s.fs, p, path, kind).replays()
            for site in s.host.sites:
                ctx = build_exec_context(s, site)
                assert php_can_access(ctx, s.fs, path, kind).replays()


def test_overlays_only_deny():
    rng = random.Random(13)
    for _ in range(40):
        s = random_scenario(rng)
        for site in s.host.sites:
            ctx = build_exec_context(s, site)
            for _ in range(10):
                _, path, kind = random_access_case(rng, s)
                if php_can_access(ctx, s.fs, path, kind).allowed:
                    assert can_access(s.fs, ctx.identity, path, kind).allowed


def test_fd_table_only_in_inheriting_modes():
    rng = random.Random(14)
    for _ in range(60):
        s = random_scenario(rng)
        for site in s.host.sites:
            ctx = build_exec_context(s, site)
            if ctx.fd_table:
                assert s.host.mode in (Mode.APACHE_MODULE, Mode.PERUSER_MPM, Mode.ITK_MPM)
            logs = {x.error_log for x in s.host.sites} | {x.access_log for x in s.host.sites}
            logs.add(s.host.shared_access_log)
            assert all(how == "write-append" and path in logs for path, how in ctx.fd_table)


@settings(max_examples=200, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    extra_bits=st.integers(0, 0o777),
)
def test_monotonic_in_permission_bits(seed, extra_bits):
    rng = random.Random(seed)
    s = random_scenario(rng)
    p, path, kind = random_access_case(rng, s)
    before = can_access(s.fs, p, path, kind).allowed
    target = rng.choice(sorted(s.fs.nodes))
    node = s.fs.nodes[target]
    widened = s.fs.with_nodes(replace(node, mode=node.mode | extra_bits))
    if before:
        assert can_access(widened, p, path, kind).allowed
