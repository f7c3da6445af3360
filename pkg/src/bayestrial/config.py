"""JSON run configuration: schema, validation and object construction.

``parse_config`` collects every problem it finds (schema violations,
unknown keys, unresolved names, invalid values) and raises one
``ConfigError`` listing them with dotted paths such as
``design.success.posterior_cutoff``.
"""

from dataclasses import dataclass
import json
import math

from jsonschema import Draft202012Validator

from .borrowing import (CommensurateSpec, HistoricalData, MapHyperGrid, PowerPriorSpec,
                        RobustMixSpec, commensurate_prior, map_prior, power_prior, robustify)
from .dosefinding import KINDS, CrmSpec, EscalationDesign, MtpiSpec, boin_boundaries
from .engine import DesignPrior, Scenario, TrialDesign
from .probability import BetaMixture, BetaParams
from .rules import ONE_ARM, TWO_ARM, FutilityRule, Monitoring, SuccessRule

SCHEMA_VERSION = "1.0"

_prob = {"type": "number", "minimum": 0, "maximum": 1}
_open_prob = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
_pos = {"type": "number", "exclusiveMinimum": 0}
_count = {"type": "integer", "minimum": 0}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_beta = _obj({"alpha": _pos, "beta": _pos}, ["alpha", "beta"])
_studies = {"type": "array", "minItems": 1,
            "items": {"type": "array", "items": _count, "minItems": 2, "maxItems": 2}}

_prior = {
    "type": "object",
    "required": ["type"],
    "properties": {"type": {"enum": ["beta", "beta_mixture", "power", "map", "robust_map",
                                     "commensurate"]}},
    "allOf": [
        {"if": {"properties": {"type": {"const": "beta"}}},
         "then": _obj({"type": {}, "alpha": _pos, "beta": _pos}, ["alpha", "beta"])},
        {"if": {"properties": {"type": {"const": "beta_mixture"}}},
         "then": _obj({"type": {}, "components": {
             "type": "array", "minItems": 1,
             "items": _obj({"weight": _prob, "alpha": _pos, "beta": _pos},
                           ["weight", "alpha", "beta"])}}, ["components"])},
        {"if": {"properties": {"type": {"const": "power"}}},
         "then": _obj({"type": {}, "historical": _studies, "discount": _prob, "baseline": _beta},
                      ["historical", "discount"])},
        {"if": {"properties": {"type": {"const": "map"}}},
         "then": _obj({"type": {}, "historical": _studies,
                       "mean_grid": {"type": "array", "items": _open_prob, "minItems": 1},
                       "concentration_grid": {"type": "array", "items": _pos, "minItems": 1}},
                      ["historical"])},
        {"if": {"properties": {"type": {"const": "robust_map"}}},
         "then": _obj({"type": {}, "historical": _studies, "map_weight": _prob, "vague": _beta,
                       "mean_grid": {"type": "array", "items": _open_prob, "minItems": 1},
                       "concentration_grid": {"type": "array", "items": _pos, "minItems": 1}},
                      ["historical", "map_weight"])},
        {"if": {"properties": {"type": {"const": "commensurate"}}},
         "then": _obj({"type": {}, "historical": _studies, "baseline": _beta,
                       "tau_grid": {"type": "array", "items": _pos, "minItems": 1},
                       "tau_weights": {"type": "array", "items": {"type": "number", "minimum": 0}},
                       "theta_grid_size": {"type": "integer", "minimum": 11}},
                      ["historical", "tau_grid"])},
    ],
}

_scenario = _obj({"label": {"type": "string", "minLength": 1},
                  "rates": {"type": "array", "items": _prob, "minItems": 1, "maxItems": 2},
                  "drift": {"type": ["array", "null"], "items": {"type": "number"}}},
                 ["label", "rates"])

SCHEMA = _obj({
    "schema_version": {"const": SCHEMA_VERSION},
    "priors": {"type": "object", "additionalProperties": _prior},
    "design": _obj({
        "comparison": {"enum": [ONE_ARM, TWO_ARM]},
        "sizes": {"type": "array", "minItems": 1, "maxItems": 2,
                  "items": {"type": "array", "minItems": 1,
                            "items": {"type": "integer", "minimum": 1}}},
        "analysis_priors": {"type": "array", "minItems": 1, "maxItems": 2,
                            "items": {"type": "string"}},
        "success": _obj({"effect_threshold": {"type": "number", "minimum": -1, "maximum": 1},
                         "posterior_cutoff": _open_prob},
                        ["effect_threshold", "posterior_cutoff"]),
        "futility": {"oneOf": [{"type": "null"},
                               _obj({"ppos_cutoff": {"type": "number", "minimum": 0,
                                                     "exclusiveMaximum": 1}},
                                    ["ppos_cutoff"])]},
        "monitoring": _obj({"kind": {"enum": ["posterior", "ppos", "none"]},
                            "cutoff": {"type": ["number", "null"], "exclusiveMinimum": 0,
                                       "maximum": 1}},
                           ["kind"]),
    }, ["comparison", "sizes", "analysis_priors", "success"]),
    "scenarios": {"type": "array", "items": _scenario},
    "sensitivity": {"type": "array", "items": _obj({
        "label": {"type": "string", "minLength": 1},
        "analysis_priors": {"type": "array", "minItems": 1, "maxItems": 2,
                            "items": {"type": "string"}}}, ["label", "analysis_priors"])},
    "design_prior": {"oneOf": [
        _obj({"atoms": {"type": "array", "minItems": 1, "items": _obj(
            {"weight": _prob, "scenario": {"type": "string"}}, ["weight", "scenario"])}},
             ["atoms"]),
        _obj({"beta": _beta, "control_rate": _prob,
              "grid_points": {"type": "integer", "minimum": 2}}, ["beta"]),
    ]},
    "calibration": _obj({
        "null_scenario": {"type": "string"},
        "alpha": _open_prob,
        "cutoff_grid_step": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
        "spending_fractions": {"type": "array", "items": _prob, "minItems": 1},
        "assurance": _obj({"target": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                           "parameter": {"enum": ["n", "cutoff"]},
                           "values": {"type": "array", "items": {"type": "number"},
                                      "minItems": 1}},
                          ["target", "values"]),
    }, ["null_scenario", "alpha"]),
    "dose_finding": _obj({
        "design": {"enum": list(KINDS)},
        "target": _open_prob,
        "n_doses": {"type": "integer", "minimum": 1},
        "cohort_size": {"type": "integer", "minimum": 1},
        "max_n": {"type": "integer", "minimum": 1},
        "start_dose": _count,
        "elimination_cutoff": {"oneOf": [{"type": "null"}, _open_prob]},
        "phi1": _open_prob, "phi2": _open_prob,
        "eps1": _pos, "eps2": _pos,
        "prior": _beta,
        "ei": {"type": "array", "items": _open_prob, "minItems": 2, "maxItems": 2},
        "skeleton": {"type": "array", "items": _open_prob, "minItems": 1},
        "prior_sd": _pos,
        "no_skip": {"type": "boolean"},
        "truths": {"type": "array", "items": _obj(
            {"label": {"type": "string", "minLength": 1},
             "rates": {"type": "array", "items": _prob, "minItems": 1}}, ["label", "rates"])},
        "replicates": {"type": "integer", "minimum": 1},
        "table_max_n": {"type": "integer", "minimum": 1},
    }, ["design", "target", "n_doses"]),
    "execution": _obj({
        "mode": {"enum": ["auto", "exact", "monte-carlo"]},
        "replicates": {"type": "integer", "minimum": 1},
        "master_seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
    }),
}, ["schema_version"])


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` holds (path, message) pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{p or '<root>'}: {m}" for p, m in self.errors))


def _dotted(parts):
    return ".".join(str(p) for p in parts)


def _schema_errors(doc):
    out = []
    for err in Draft202012Validator(SCHEMA).iter_errors(doc):
        if err.validator == "additionalProperties":
            allowed = set(err.schema.get("properties", {}))
            for key in sorted(set(err.instance) - allowed):
                out.append((_dotted(list(err.absolute_path) + [key]), "unknown key"))
        elif err.validator in ("allOf", "oneOf") and err.context:
            # report the most specific sub-error
            best = max(err.context, key=lambda e: len(e.absolute_path))
            if best.validator == "additionalProperties":
                allowed = set(best.schema.get("properties", {}))
                for key in sorted(set(best.instance) - allowed):
                    out.append((_dotted(list(best.absolute_path) + [key]), "unknown key"))
            else:
                out.append((_dotted(best.absolute_path), best.message))
        else:
            out.append((_dotted(err.absolute_path), err.message))
    return sorted(set(out))


@dataclass(frozen=True)
class DesignConfig:
    """A validated configuration and the objects built from it."""

    raw: dict
    priors: dict
    design: TrialDesign
    scenarios: tuple
    sensitivity: tuple
    design_prior: DesignPrior
    calibration: dict
    dose_design: EscalationDesign
    execution: dict

    def scenario(self, label):
        return next(s for s in self.scenarios if s.label == label)


def build_prior(spec):
    kind = spec["type"]
    if kind == "beta":
        return BetaParams(spec["alpha"], spec["beta"])
    if kind == "beta_mixture":
        comps = tuple((c["weight"], BetaParams(c["alpha"], c["beta"])) for c in spec["components"])
        return BetaMixture(comps)
    hist = HistoricalData(tuple(tuple(s) for s in spec["historical"]))
    if kind == "power":
        base = BetaParams(**spec.get("baseline", {"alpha": 1.0, "beta": 1.0}))
        return power_prior(PowerPriorSpec(spec["discount"], base), hist.pooled)
    if kind in ("map", "robust_map"):
        hyper = None
        if "mean_grid" in spec or "concentration_grid" in spec:
            d = MapHyperGrid.default()
            hyper = MapHyperGrid(tuple(spec.get("mean_grid", d.mean_grid)),
                                 tuple(spec.get("concentration_grid", d.concentration_grid)))
        mix = map_prior(hist, hyper)
        if kind == "map":
            return mix
        vague = BetaParams(**spec.get("vague", {"alpha": 1.0, "beta": 1.0}))
        return robustify(mix, RobustMixSpec(spec["map_weight"], vague))
    base = BetaParams(**spec.get("baseline", {"alpha": 1.0, "beta": 1.0}))
    hist_post = base.update(hist.pooled)
    cspec = CommensurateSpec(tuple(spec["tau_grid"]),
                             tuple(spec["tau_weights"]) if "tau_weights" in spec else None,
                             spec.get("theta_grid_size", 2001))
    return commensurate_prior(hist_post, cspec)


def _collect(errors, path, fn):
    try:
        return fn()
    except (ValueError, TypeError) as exc:
        errors.append((path, str(exc)))
        return None


def _resolve_priors(names, priors, path, errors):
    out = []
    for i, name in enumerate(names):
        if name not in priors:
            errors.append((f"{path}.{i}", f"unknown prior {name!r}"))
        else:
            out.append(priors[name])
    return tuple(out)


def _build_design(d, priors, errors):
    arms = 1 if d["comparison"] == ONE_ARM else 2
    if len(d["sizes"]) != arms:
        errors.append(("design.sizes", f"{d['comparison']} design needs {arms} arm(s)"))
    if len(d["analysis_priors"]) != arms:
        errors.append(("design.analysis_priors", f"{d['comparison']} design needs {arms} prior(s)"))
    for a, s in enumerate(d["sizes"]):
        if any(b <= x for x, b in zip(s, s[1:])):
            errors.append((f"design.sizes.{a}", "cumulative sizes must be strictly increasing"))
    ap = _resolve_priors(d["analysis_priors"], priors, "design.analysis_priors", errors)
    if errors:
        return None
    success = _collect(errors, "design.success", lambda: SuccessRule(
        d["success"]["effect_threshold"], d["success"]["posterior_cutoff"], d["comparison"]))
    fut = d.get("futility")
    futility = None if fut is None else FutilityRule(fut["ppos_cutoff"])
    mon = d.get("monitoring", {"kind": "posterior"})
    monitoring = _collect(errors, "design.monitoring",
                          lambda: Monitoring(mon["kind"], mon.get("cutoff")))
    if success is None or monitoring is None:
        return None
    return _collect(errors, "design", lambda: TrialDesign(
        tuple(tuple(s) for s in d["sizes"]), ap, success, futility, monitoring))


def _build_dose(d, errors):
    kind = d["design"]
    kw = {k: d[k] for k in ("cohort_size", "max_n", "start_dose", "elimination_cutoff") if k in d}
    if kind == "boin":
        kw["boin"] = _collect(errors, "dose_finding",
                              lambda: boin_boundaries(d["target"], d.get("phi1"), d.get("phi2")))
    elif kind in ("mtpi", "mtpi2"):
        prior = BetaParams(**d.get("prior", {"alpha": 1.0, "beta": 1.0}))
        kw["mtpi"] = _collect(errors, "dose_finding", lambda: MtpiSpec(
            d["target"], d.get("eps1", 0.05), d.get("eps2", 0.05), prior, kind))
    elif kind == "i3+3" and "ei" in d:
        kw["ei"] = tuple(d["ei"])
    elif kind == "crm":
        if "skeleton" not in d:
            errors.append(("dose_finding.skeleton", "crm design needs a skeleton"))
            return None
        kw["crm"] = _collect(errors, "dose_finding.skeleton", lambda: CrmSpec(
            tuple(d["skeleton"]), d["target"], d.get("prior_sd", 1.34),
            no_skip=d.get("no_skip", True)))
    if errors:
        return None
    design = _collect(errors, "dose_finding",
                      lambda: EscalationDesign(kind, d["target"], d["n_doses"], **kw))
    for i, t in enumerate(d.get("truths", [])):
        if len(t["rates"]) != d["n_doses"]:
            errors.append((f"dose_finding.truths.{i}.rates", "need one rate per dose"))
    return design


def parse_config(text):
    """Validate JSON text and build the run objects; raises ``ConfigError``."""
    try:
        doc = json.loads(text, parse_constant=lambda c: float("nan"))
    except json.JSONDecodeError as exc:
        raise ConfigError([("", f"invalid JSON: {exc}")]) from exc
    if not isinstance(doc, dict):
        raise ConfigError([("", "top level must be an object")])
    errors = _schema_errors(doc)
    if errors:
        raise ConfigError(errors)

    priors = {}
    for name, spec in doc.get("priors", {}).items():
        p = _collect(errors, f"priors.{name}", lambda: build_prior(spec))
        if p is not None:
            priors[name] = p

    design = None
    if "design" in doc:
        design = _build_design(doc["design"], priors, errors)

    scenarios = []
    labels = set()
    for i, s in enumerate(doc.get("scenarios", [])):
        if s["label"] in labels:
            errors.append((f"scenarios.{i}.label", f"duplicate label {s['label']!r}"))
        labels.add(s["label"])
        sc = _collect(errors, f"scenarios.{i}",
                      lambda: Scenario(tuple(s["rates"]), s.get("drift"), s["label"]))
        if sc is None:
            continue
        if design is not None:
            if len(sc.rates) != design.arms:
                errors.append((f"scenarios.{i}.rates",
                               f"need {design.arms} rate(s) for this design"))
            if sc.drift is not None and len(sc.drift) != design.looks:
                errors.append((f"scenarios.{i}.drift", "need one offset per look"))
        scenarios.append(sc)

    sensitivity = []
    for i, alt in enumerate(doc.get("sensitivity", [])):
        ap = _resolve_priors(alt["analysis_priors"], priors, f"sensitivity.{i}.analysis_priors",
                             errors)
        if design is not None and len(ap) != design.arms:
            errors.append((f"sensitivity.{i}.analysis_priors",
                           f"need {design.arms} prior(s) for this design"))
        sensitivity.append((alt["label"], ap))

    dprior = None
    if "design_prior" in doc:
        dp = doc["design_prior"]
        if "atoms" in dp:
            atoms = []
            for i, a in enumerate(dp["atoms"]):
                if a["scenario"] not in labels:
                    errors.append((f"design_prior.atoms.{i}.scenario",
                                   f"unknown scenario {a['scenario']!r}"))
                else:
                    atoms.append((a["weight"], next(s for s in scenarios
                                                    if s.label == a["scenario"])))
            if len(atoms) == len(dp["atoms"]):
                dprior = _collect(errors, "design_prior.atoms", lambda: DesignPrior(tuple(atoms)))
        else:
            if design is not None and design.arms == 2 and "control_rate" not in dp:
                errors.append(("design_prior.control_rate", "two-arm designs need a control rate"))
            else:
                dprior = DesignPrior.from_beta(BetaParams(**dp["beta"]), dp.get("control_rate"),
                                               dp.get("grid_points", 201))

    cal = doc.get("calibration")
    if cal is not None:
        if cal["null_scenario"] not in labels:
            errors.append(("calibration.null_scenario",
                           f"unknown scenario {cal['null_scenario']!r}"))
        fr = cal.get("spending_fractions")
        if fr is not None:
            if design is None or design.arms != 1:
                errors.append(("calibration.spending_fractions",
                               "group-sequential boundaries need a one-arm design"))
            elif len(fr) != design.looks:
                errors.append(("calibration.spending_fractions", "need one fraction per look"))
            elif any(b < a for a, b in zip(fr, fr[1:])) or not math.isclose(fr[-1], 1.0):
                errors.append(("calibration.spending_fractions",
                               "fractions must be non-decreasing and end at 1"))
        if "assurance" in cal and dprior is None:
            errors.append(("calibration.assurance", "assurance search needs a design_prior"))
    for section in ("calibration", "design_prior", "sensitivity"):
        if section in doc and design is None and not any(p == "design" for p, _ in errors):
            errors.append((section, "needs a design section"))

    dose = None
    if "dose_finding" in doc:
        dose = _build_dose(doc["dose_finding"], errors)

    if errors:
        raise ConfigError(errors)
    execution = {"mode": "auto", "replicates": 10_000, "master_seed": 0}
    execution.update(doc.get("execution", {}))
    return DesignConfig(doc, priors, design, tuple(scenarios), tuple(sensitivity), dprior,
                        cal, dose, execution)


def scaled_sizes(design, n):
    """Schedule with final size ``n`` and the same information fractions."""
    out = []
    for arm in design.sizes:
        final = arm[-1]
        out.append(tuple(max(1, int(round(n * s / final))) for s in arm[:-1]) + (int(n),))
    return tuple(out)
