import random
from dataclasses import replace

import pytest

from tenantguard.attacks import audit_all
from tenantguard.model import Mode, is_under, validate_scenario
from tenantguard.remediation import (
    ActionKind,
    RemediationAction,
    RemediationError,
    RemediationPlan,
    apply_plan,
    emit_remediation_script,
    plan_remediation,
)

from scenario_gen import random_scenario

ISOLATED_LAYOUT = [
    "d rwx r-x --- web1:web1 /home/website1",
    "d rwx r-x --- web1:web1 /home/website1/public_html",
    "d rwx r-x --- web1:web1 /home/website1/log",
    "d rwx r-x --- web1:web1 /home/website1/session",
    "",
    "d rwx r-x --- web2:web2 /home/website2",
    "d rwx r-x --- web2:web2 /home/website2/public_html",
    "d rwx r-x --- web2:web2 /home/website2/log",
    "d rwx r-x --- web2:web2 /home/website2/session",
]


def test_default_plan_reproduces_isolated_layout(default_scenario):
    plan = plan_remediation(default_scenario)
    assert list(plan.permissions) == ISOLATED_LAYOUT


def test_default_plan_vhosts_carry_separated_paths(default_scenario):
    plan = plan_remediation(default_scenario)
    assert "  ErrorLog /home/website1/log/error_log" in plan.vhost_text.splitlines()
    assert "  CustomLog /home/website2/log/access_log common" in plan.vhost_text.splitlines()
    assert "  php_value session.save_path /home/website2/session" in plan.vhost_text.splitlines()


def test_secure_fixture_is_fixpoint(secure_scenario):
    plan = plan_remediation(secure_scenario)
    assert plan.actions == ()
    assert not plan


def test_only_session_actions_when_sessions_shared(secure_scenario):
    sites = tuple(replace(site, session_dir="/tmp") for site in secure_scenario.host.sites)
    fs = secure_scenario.fs.without("/home/website1/session", "/home/website2/session")
    s = replace(secure_scenario, fs=fs, host=replace(secure_scenario.host, sites=sites))
    ids = plan_remediation(s).action_ids()
    expected = []
    for site in ("website1", "website2"):
        d = f"/home/{site}/session"
        expected += [f"fs:mkdir:{d}", f"fs:chown:{d}", f"fs:chmod:{d}", f"vhost:{site}:session.save_path"]
    assert sorted(ids) == sorted(expected)


def test_apply_zeroes_default_findings(default_scenario):
    fixed = apply_plan(default_scenario, plan_remediation(default_scenario))
    assert validate_scenario(fixed) == []
    assert audit_all(fixed).findings == ()
    assert fixed.host.mode is Mode.ITK_MPM


def test_apply_does_not_mutate_input(default_scenario):
    before = dict(default_scenario.fs.nodes)
    apply_plan(default_scenario, plan_remediation(default_scenario))
    assert dict(default_scenario.fs.nodes) == before


def test_apply_twice_is_idempotent(default_scenario):
    plan = plan_remediation(default_scenario)
    once = apply_plan(default_scenario, plan)
    assert apply_plan(once, plan) == once


def test_apply_empty_plan_is_identity(default_scenario):
    assert apply_plan(default_scenario, RemediationPlan(())) == default_scenario


def test_recommended_mode_override(fixtures_dir):
    from tenantguard.manifest import load_scenario

    s = load_scenario(fixtures_dir / "recommended-suphp")
    plan = plan_remediation(s)
    assert plan.action_ids() == ["host:mode"]
    assert apply_plan(s, plan).host.mode is Mode.SUPHP
    assert "recommended_mode" in plan.advisory_notes[0]


def test_apply_rejects_unknown_site(default_scenario):
    bad = RemediationPlan((RemediationAction("x", ActionKind.SET_VHOST_DIRECTIVE, "nope", ("ErrorLog", "/x")),))
    with pytest.raises(RemediationError):
        apply_plan(default_scenario, bad)


def test_apply_rejects_unordered_paths(default_scenario):
    bad = RemediationPlan((RemediationAction("x", ActionKind.CREATE_DIR, "/srv/a/b"),))
    with pytest.raises(RemediationError):
        apply_plan(default_scenario, bad)


def test_create_dir_precedes_every_use(default_scenario):
    created = set()
    for a in plan_remediation(default_scenario).actions:
        if a.kind is ActionKind.CREATE_DIR:
            created.add(a.target)
        elif a.kind in (ActionKind.CHOWN, ActionKind.CHMOD) and a.target not in default_scenario.fs:
            assert a.target in created


def test_script_contents(default_scenario):
    script = emit_remediation_script(plan_remediation(default_scenario))
    lines = script.splitlines()
    assert "chmod 750 /home/website1/session" in lines
    assert "chown web1:web1 /home/website1/session" in lines
    assert lines.index("mkdir /home/website1/session") < lines.index("chown web1:web1 /home/website1/session")
    sections = [l for l in lines if l.startswith("# ---")]
    assert sections == [
        "# --- filesystem ---",
        "# --- vhosts.conf (regenerated) ---",
        "# --- host.settings changes ---",
        "# --- notes ---",
    ]
    assert "mode = ItkMpm" in lines
    assert script == emit_remediation_script(plan_remediation(default_scenario))


def test_empty_plan_script():
    text = emit_remediation_script(RemediationPlan(()))
    assert text.splitlines()[0] == "# tenantguard remediation plan"
    assert "no actions" in text


def test_random_scenarios_remediate_cleanly():
    rng = random.Random(31)
    for _ in range(40):
        s = random_scenario(rng)
        plan = plan_remediation(s)
        fixed = apply_plan(s, plan)
        assert validate_scenario(fixed) == []
        assert audit_all(fixed).findings == ()
        assert plan_remediation(fixed).actions == ()
        assert apply_plan(fixed, plan) == fixed
        # content under docroots survives
        for site in s.host.sites:
            for node in s.fs.under(site.docroot):
                assert node.path in fixed.fs
                assert is_under(node.path, site.docroot)
