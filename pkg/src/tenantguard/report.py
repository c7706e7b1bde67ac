"""Serialization of audit reports (JSON and a plain-text table)."""

from __future__ import annotations

import json
from itertools import groupby

from .access import AccessDecision, EvidenceStep
from .attacks import AttackId, AuditReport, Finding, Severity

TEXT_EVIDENCE_LIMIT = 20

_COLORS = {"critical": "31;1", "high": "33", "medium": "36", "denied": "2"}


def _paint(text: str, key: str, color: bool) -> str:
    if not color or key not in _COLORS:
        return text
    return f"\x1b[{_COLORS[key]}m{text}\x1b[0m"


def finding_to_dict(f: Finding) -> dict:
    evidence = []
    for i, decision in enumerate(f.evidence):
        for step in decision.chain:
            evidence.append({**step.as_dict(), "decision": i})
    return {
        "attack": f.attack.value,
        "attacker": f.attacker,
        "victim": f.victim,
        "severity": f.severity.value,
        "evidence": evidence,
        "remediation_refs": list(f.remediation_refs),
    }


def report_to_dict(r: AuditReport) -> dict:
    return {
        "version": r.version,
        "digest": r.digest,
        "findings": [finding_to_dict(f) for f in r.findings],
        "counts": dict(r.counts),
    }


def _finding_from_dict(d: dict) -> Finding:
    chains: dict = {}
    for step in d["evidence"]:
        chains.setdefault(step.get("decision", 0), []).append(
            EvidenceStep(step["path"], step["check"], step["class"], step["outcome"])
        )
    evidence = tuple(
        AccessDecision(chain[-1].outcome, tuple(chain)) for _, chain in sorted(chains.items())
    )
    return Finding(
        attack=AttackId(d["attack"]),
        attacker=d["attacker"],
        victim=d["victim"],
        evidence=evidence,
        severity=Severity(d["severity"]),
        remediation_refs=tuple(d["remediation_refs"]),
    )


def report_from_json(text: str) -> AuditReport:
    data = json.loads(text)
    return AuditReport(
        digest=data["digest"],
        findings=tuple(_finding_from_dict(f) for f in data["findings"]),
        version=data["version"],
        counts=data["counts"],
    )


def _render_json(r: AuditReport) -> str:
    return json.dumps(report_to_dict(r), indent=2, sort_keys=True) + "\n"


def _flag(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "-"
    if isinstance(v, list):
        return ",".join(v) if v else "-"
    return str(v)


def _render_text(r: AuditReport, color: bool) -> str:
    d = r.digest
    lines = [
        f"tenantguard {r.version}: mode {d['mode']}, {d['sites']} site(s)",
        "flags: " + " ".join(f"{k}={_flag(v)}" for k, v in sorted(d["flags"].items())),
    ]
    for attack, group in groupby(r.findings, key=lambda f: f.attack):
        group = list(group)
        sev = group[0].severity.value
        lines.append("")
        lines.append(f"{attack.value}  [{_paint(sev, sev, color)}]  {len(group)} finding(s)")
        for f in group:
            who = f.attacker if f.victim is None else f"{f.attacker} -> {f.victim}"
            lines.append(f"  {who}")
            steps = [s for decision in f.evidence for s in decision.chain]
            for step in steps[:TEXT_EVIDENCE_LIMIT]:
                verdict = "ok" if step.outcome else _paint("denied", "denied", color)
                lines.append(f"      {step.cls:<12} {step.check:<24} {step.path}  {verdict}")
            if len(steps) > TEXT_EVIDENCE_LIMIT:
                lines.append(f"      ... {len(steps) - TEXT_EVIDENCE_LIMIT} more step(s)")
            if f.remediation_refs:
                lines.append(f"    fix: {', '.join(f.remediation_refs)}")
    lines.append("")
    n = len(r.findings)
    lines.append(f"{n} finding{'' if n == 1 else 's'}")
    return "\n".join(lines) + "\n"


def render_report(r: AuditReport, fmt: str = "text", color: bool = False) -> str:
    if fmt == "json":
        return _render_json(r)
    if fmt == "text":
        return _render_text(r, color)
    raise ValueError(f"unknown report format {fmt!r}")
