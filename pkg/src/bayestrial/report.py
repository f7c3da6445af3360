"""Run pipelines behind the CLI subcommands, and canonical report output."""

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import replace

from . import __version__
from .calibration import (AssuranceProblem, CalibrationProblem, calibrate_assurance,
                          calibrate_cutoff, exact_gs_boundaries)
from .config import ConfigError, scaled_sizes
from .dosefinding import decision_table, escalation_oc
from .engine import bayesian_oc, check_exact_budget, exact_oc, monte_carlo_oc
from .exceptions import BudgetExceededError
from .settings import DEFAULTS, settings_record

COMMANDS = ("simulate", "oc", "calibrate", "dose-find", "report")
SIG_DIGITS = 12


def canonical_value(x):
    """Round floats to 12 significant digits, recursively."""
    if isinstance(x, bool) or x is None or isinstance(x, (int, str)):
        return x
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError("non-finite number in report")
        return float(f"{x:.{SIG_DIGITS}g}")
    if isinstance(x, dict):
        return {str(k): canonical_value(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [canonical_value(v) for v in x]
    if hasattr(x, "item"):
        return canonical_value(x.item())
    raise TypeError(f"cannot serialize {type(x).__name__}")


def canonical_json(obj, indent=2):
    return json.dumps(canonical_value(obj), sort_keys=True, indent=indent,
                      allow_nan=False) + "\n"


def config_digest(raw):
    text = json.dumps(canonical_value(raw), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


# --- pipelines ---------------------------------------------------------------------

def _mode_for(design, requested):
    if requested == "monte-carlo":
        return "monte-carlo"
    try:
        check_exact_budget(design)
        return "exact"
    except BudgetExceededError:
        if requested == "exact":
            raise
        return "monte-carlo"


def _oc_block(cfg, design, mode, workers):
    ex = cfg.execution
    out = []
    for i, sc in enumerate(cfg.scenarios):
        if mode == "exact":
            rep = exact_oc(design, sc)
        else:
            rep = monte_carlo_oc(design, sc, ex["replicates"], ex["master_seed"], workers,
                                 scenario_index=i)
        out.append(rep.to_dict())
    return out


def _bayes_block(cfg, design, mode, workers):
    if cfg.design_prior is None:
        return None
    ex = cfg.execution
    return bayesian_oc(design, cfg.design_prior, mode, ex["replicates"], ex["master_seed"],
                       workers).to_dict()


def _sensitivity_block(cfg, design, mode, workers):
    out = []
    for label, priors in cfg.sensitivity:
        alt = replace(design, priors=priors)
        out.append({"label": label, "scenarios": _oc_block(cfg, alt, mode, workers)})
    return out


def _design_results(cfg, design, mode, workers):
    res = {"scenarios": _oc_block(cfg, design, mode, workers)}
    bayes = _bayes_block(cfg, design, mode, workers)
    if bayes is not None:
        res["bayesian"] = bayes
    return res


def run_oc(cfg, workers, mode=None):
    design = cfg.design
    mode = mode or _mode_for(design, cfg.execution["mode"])
    results = _design_results(cfg, design, mode, workers)
    return results, _sensitivity_block(cfg, design, mode, workers), mode


def run_calibrate(cfg, workers):
    cal = cfg.calibration
    design = cfg.design
    null = cfg.scenario(cal["null_scenario"])
    problem = CalibrationProblem(design, null, cal["alpha"],
                                 cal.get("cutoff_grid_step", DEFAULTS.cutoff_step))
    cert = calibrate_cutoff(problem)
    calibrated = design.with_cutoff(cert.cutoff)
    # frequentist and Bayesian OCs of the calibrated design are always reported together
    results = {"certificate": cert.to_dict()}
    results.update(_design_results(cfg, calibrated, "exact", workers))
    if "spending_fractions" in cal:
        gs = exact_gs_boundaries(design.sizes[0], cal["alpha"], cal["spending_fractions"],
                                 null.rates[0])
        results["group_sequential"] = gs.to_dict()
    if "assurance" in cal:
        a = cal["assurance"]
        param = a.get("parameter", "n")
        if param == "n":
            family = lambda v: replace(calibrated, sizes=scaled_sizes(calibrated, int(v)))
        else:
            family = lambda v: design.with_cutoff(float(v))
        mode = _mode_for(design, cfg.execution["mode"])
        ex = cfg.execution
        res = calibrate_assurance(AssuranceProblem(
            family, cfg.design_prior, a["target"], tuple(a["values"]), param, mode,
            ex["replicates"], ex["master_seed"]))
        results["assurance_search"] = res.to_dict()
    return results, _sensitivity_block(cfg, calibrated, "exact", workers), "exact"


def run_dose(cfg, workers):
    dose = cfg.dose_design
    d = cfg.raw["dose_finding"]
    ex = cfg.execution
    out = {"design": dose.kind, "target": dose.target}
    if dose.kind != "crm":
        rows = decision_table(dose, d.get("table_max_n", 12))
        out["decision_table"] = [{"n": n, "y": y, "decision": dec, "eliminate": el}
                                 for n, y, dec, el in rows]
    if dose.boin is not None:
        out["boundaries"] = {"lambda_e": dose.boin.lambda_e, "lambda_d": dose.boin.lambda_d}
    sims = []
    for i, t in enumerate(d.get("truths", [])):
        oc = escalation_oc(dose, tuple(t["rates"]), d.get("replicates", 1000),
                           ex["master_seed"], workers, scenario_index=i)
        sims.append({"label": t["label"], **oc.to_dict()})
    out["simulations"] = sims
    return out


def manifest(cfg, modes, timestamp=None):
    return {
        "tool": "bayestrial",
        "version": __version__,
        "config_digest": config_digest(cfg.raw),
        "master_seed": cfg.execution["master_seed"],
        "replicates": cfg.execution["replicates"],
        "settings": settings_record(DEFAULTS),
        "modes": modes,
        "timestamp": timestamp,
    }


def run(cfg, command, workers=1, timestamp=None):
    """Execute a subcommand and return the report as a plain dict."""
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}")
    report = {"command": command, "config": cfg.raw}
    modes = {}
    needs_design = command in ("simulate", "oc", "calibrate")
    if needs_design and cfg.design is None:
        raise ConfigError([("design", f"required by '{command}'")])
    if command == "calibrate" and cfg.calibration is None:
        raise ConfigError([("calibration", "required by 'calibrate'")])
    if command == "dose-find" and cfg.dose_design is None:
        raise ConfigError([("dose_finding", "required by 'dose-find'")])

    if command == "simulate":
        res, sens, modes["oc"] = run_oc(cfg, workers, "monte-carlo")
        report["oc"] = res
    elif command == "oc":
        res, sens, modes["oc"] = run_oc(cfg, workers)
        report["oc"] = res
    elif command == "calibrate":
        res, sens, modes["calibration"] = run_calibrate(cfg, workers)
        report["calibration"] = res
    elif command == "dose-find":
        sens = None
        report["dose_finding"] = run_dose(cfg, workers)
        modes["dose_finding"] = "monte-carlo"
    else:
        sens = None
        if cfg.design is not None:
            res, sens, modes["oc"] = run_oc(cfg, workers)
            report["oc"] = res
            if cfg.calibration is not None:
                report["calibration"], _, modes["calibration"] = run_calibrate(cfg, workers)
        if cfg.dose_design is not None:
            report["dose_finding"] = run_dose(cfg, workers)
            modes["dose_finding"] = "monte-carlo"
    if sens is not None and cfg.sensitivity:
        report["sensitivity"] = sens
    if cfg.sensitivity and needs_design and len(report.get("sensitivity", ())) != len(cfg.sensitivity):
        raise RuntimeError("sensitivity block missing alternative priors")
    report["manifest"] = manifest(cfg, modes, timestamp)
    return report


# --- emit ----------------------------------------------------------------------------

def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def _cell(v):
    v = canonical_value(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return ""
    if isinstance(v, list):
        return ";".join(str(_cell(x)) for x in v)
    return v


def _oc_rows(section, scenarios):
    summary, by_look = [], []
    for s in scenarios:
        se = (s.get("standard_errors") or {}).get("reject_prob")
        summary.append([section, s["label"], s["mode"], s["reject_prob"],
                        s["expected_sample_size"], s.get("replicates"), se])
        for k, (ps, pf) in enumerate(zip(s["success_by_look"], s["failure_by_look"])):
            by_look.append([section, s["label"], k, ps, pf])
    return summary, by_look


def csv_bundle(report):
    """Mapping file name -> CSV text; one table per section, manifest always included."""
    files = {}
    summary, by_look = [], []
    for key in ("oc", "calibration"):
        if key in report:
            s, b = _oc_rows(key, report[key]["scenarios"])
            summary += s
            by_look += b
    for alt in report.get("sensitivity", []):
        s, b = _oc_rows(f"sensitivity:{alt['label']}", alt["scenarios"])
        summary += s
        by_look += b
    if summary:
        files["oc_summary.csv"] = _csv_text(
            ["section", "scenario", "mode", "reject_prob", "expected_sample_size",
             "replicates", "se_reject_prob"], summary)
        files["oc_by_look.csv"] = _csv_text(
            ["section", "scenario", "look", "success_prob", "failure_prob"], by_look)
    bayes = [(k, report[k]["bayesian"]) for k in ("oc", "calibration")
             if k in report and "bayesian" in report[k]]
    if bayes:
        files["bayesian.csv"] = _csv_text(
            ["section", "mode", "assurance", "pcd", "expected_sample_size"],
            [[k, b["mode"], b["assurance"], b["pcd"], b["expected_sample_size"]] for k, b in bayes])
    cal = report.get("calibration")
    if cal:
        c = cal["certificate"]
        files["calibration.csv"] = _csv_text(
            ["key", "value"], [[k, c[k]] for k in sorted(c)])
        if "group_sequential" in cal:
            g = cal["group_sequential"]
            files["group_sequential.csv"] = _csv_text(
                ["look", "n", "critical_count", "cumulative_rejection", "spending_limit"],
                [[k, n, b, r, lim] for k, (n, b, r, lim) in enumerate(zip(
                    g["schedule"], g["critical_counts"], g["cumulative_rejection"],
                    g["spending_limits"]))])
    dose = report.get("dose_finding")
    if dose:
        if "decision_table" in dose:
            files["decision_table.csv"] = _csv_text(
                ["n", "y", "decision", "eliminate"],
                [[r["n"], r["y"], r["decision"], r["eliminate"]] for r in dose["decision_table"]])
        rows = []
        for s in dose["simulations"]:
            for j, (p, nt, nd) in enumerate(zip(s["selection"], s["mean_treated"],
                                                s["mean_dlts"])):
                rows.append([s["label"], j, p, nt, nd])
            rows.append([s["label"], "none", s["no_selection"], "", ""])
        files["escalation.csv"] = _csv_text(
            ["truth", "dose", "selection_prob", "mean_treated", "mean_dlts"], rows)
    m = report["manifest"]
    mrows = [[k, m[k]] for k in sorted(m) if k not in ("settings", "modes")]
    mrows += [[f"settings.{k}", v] for k, v in sorted(m["settings"].items())]
    mrows += [[f"modes.{k}", v] for k, v in sorted(m["modes"].items())]
    files["manifest.csv"] = _csv_text(["key", "value"], mrows)
    return files


def emit(report, fmt="json", out_dir=None, stream=None):
    """Write the report; returns the list of paths written (empty for a stream)."""
    if fmt == "json":
        text = canonical_json(report)
        if out_dir is None:
            stream.write(text)
            return []
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, "report.json")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        return [path]
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    if out_dir is None:
        raise ValueError("csv output needs --out")
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name, text in sorted(csv_bundle(report).items()):
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        paths.append(path)
    return paths
