"""Command-line front end: config parsing, orchestration, report emission.

Every command resolves its JSON config to a plain dictionary (defaults
filled, --override entries applied, dedicated flags last), embeds that
dictionary plus its canonical-JSON sha256 in everything it writes, and
writes only inside --out.  Rerunning a command with the same resolved
config reproduces every output byte for byte; `verify` rechecks the
embedded hashes afterwards.

Exit codes: 0 success, 2 config/input parsing failure, 3 infeasible
configuration, 4 estimator fallback without a supplied rank.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .estimators import EstimatorConfig, aspca, opca, sample_covariance, spca
from .estimators import EstimationResult, estimate_noise_variance
from .model import InfeasibleSpecError, RetryExhaustedError
from .packing import (InfeasibleRegimeError, fano_bound, polar_sphere_family,
                      sign_vector_packing, single_coordinate_family,
                      support_packing, two_point_family)
from .rates import cross_component_floor, minimax_rate
from .serialize import canonical_json, config_sha256, csv_text, dump_json
from .simulate import (EstimatorSpec, ModelRecipe, concentration_mc,
                       rate_regression, run_risk_mc)
from . import figures

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INFEASIBLE = 3
EXIT_FALLBACK = 4


class ConfigError(ValueError):
    """Schema or syntax problem in a config file, flag, or input file."""


# ---------------------------------------------------------------------------
# schema validation: every command resolves its config through a field table
# (checker, default); _MISSING marks required keys, unknown keys are rejected

_MISSING = object()


def _fail(path, msg):
    raise ConfigError("%s: %s" % (path, msg))


def _as_bool(value, path):
    if not isinstance(value, bool):
        _fail(path, "expected true or false")
    return value


def _as_int(value, path):
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(path, "expected an integer")
    return int(value)


def _as_num(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, "expected a number")
    return float(value)


def _as_str(value, path):
    if not isinstance(value, str):
        _fail(path, "expected a string")
    return value


def _choice(options):
    def check(value, path):
        value = _as_str(value, path)
        if value not in options:
            _fail(path, "expected one of: %s" % ", ".join(options))
        return value
    return check


def _opt(inner):
    def check(value, path):
        return None if value is None else inner(value, path)
    return check


def _num_list(value, path):
    if not isinstance(value, list) or not value:
        _fail(path, "expected a nonempty list of numbers")
    return [_as_num(v, "%s[%d]" % (path, i)) for i, v in enumerate(value)]


def _int_list(value, path):
    if not isinstance(value, list) or not value:
        _fail(path, "expected a nonempty list of integers")
    return [_as_int(v, "%s[%d]" % (path, i)) for i, v in enumerate(value)]


def _record(fields):
    def check(value, path):
        return _validate_record(value, fields, path)
    return check


def _record_list(fields, allow_empty=False):
    def check(value, path):
        if not isinstance(value, list) or (not value and not allow_empty):
            _fail(path, "expected a nonempty list of objects")
        return [_validate_record(v, fields, "%s[%d]" % (path, i))
                for i, v in enumerate(value)]
    return check


def _param_dict(value, path):
    if not isinstance(value, dict):
        _fail(path, "expected an object of numeric parameters")
    return {str(k): _as_num(v, "%s.%s" % (path, k))
            for k, v in value.items()}


def _validate_record(cfg, fields, path):
    if not isinstance(cfg, dict):
        _fail(path, "expected an object")
    unknown = sorted(set(cfg) - set(fields))
    if unknown:
        _fail(path, "unknown keys: %s" % ", ".join(unknown))
    out = {}
    for key, (check, default) in fields.items():
        where = "%s.%s" % (path, key)
        if key in cfg:
            out[key] = check(cfg[key], where)
        elif default is _MISSING:
            _fail(where, "required key is missing")
        else:
            out[key] = default
    return out


_ESTCFG_FIELDS = {
    "gamma1": (_as_num, 4.0),
    "gamma1_bar": (_as_num, 9.0),
    "gamma1_prime": (_as_num, 3.0),
    "kappa": (_as_num, 2.1),
    "gamma2": (_opt(_as_num), None),
    "gamma3": (_as_num, 3.0),
    "M_known": (_opt(_as_int), None),
    "sigma2_known": (_opt(_as_num), None),
    "center": (_as_bool, False),
}

_MODEL_FIELDS = {
    "q": (_as_num, _MISSING),
    "radii": (_num_list, _MISSING),
    "lambdas": (_num_list, _MISSING),
    "support_sizes": (_int_list, _MISSING),
    "sigma2": (_as_num, 1.0),
    "disjoint": (_as_bool, True),
    "weights": (_choice(("random", "equal")), "random"),
    "basis_seed": (_as_int, 0),
}

_ESTIMATOR_FIELDS = {
    "name": (_choice(("opca", "spca", "aspca")), _MISSING),
    "label": (_opt(_as_str), None),
    "config": (_opt(_record(_ESTCFG_FIELDS)), None),
    "spca_gamma_mult": (_as_num, 4.0),
}

_GRID_FIELDS = {"n": (_as_int, _MISSING), "N": (_as_int, _MISSING)}

_REGRESSION_FIELDS = {
    "estimator": (_opt(_as_str), None),
    "predictor": (_choice(("theory", "N_over_nh", "sparse_rate")), "theory"),
}

_SIMULATE_FIELDS = {
    "model": (_record(_MODEL_FIELDS), _MISSING),
    "grid": (_record_list(_GRID_FIELDS), _MISSING),
    "estimators": (_record_list(_ESTIMATOR_FIELDS), _MISSING),
    "nu": (_as_int, 1),
    "reps": (_as_int, 100),
    "noiseless": (_as_bool, False),
    "master_seed": (_as_int, 0),
    "abort_fraction": (_as_num, 0.5),
    "regressions": (_record_list(_REGRESSION_FIELDS, allow_empty=True), []),
}

_LOWER_FIELDS = {
    "family": (_choice(("single-coordinate", "polar-sphere", "two-point")),
               _MISSING),
    "n": (_as_int, _MISSING),
    "N": (_as_int, _MISSING),
    "lambdas": (_num_list, _MISSING),
    "nu": (_as_int, 1),
    "q": (_opt(_as_num), None),
    "radii": (_opt(_num_list), None),
    "regime": (_opt(_choice(("bounded-below", "N-dominated",
                             "sparsity-dominated", "log-sparse"))), None),
    "alpha": (_opt(_as_num), None),
    "kappa_log": (_as_num, 1.0),
    "mu": (_opt(_as_int), None),
    "delta": (_opt(_as_num), None),
    "max_members": (_as_int, 5000),
    "max_candidates": (_as_int, 50000),
    "master_seed": (_as_int, 0),
}

_TAIL_KINDS = ("chi2_upper", "chi2_lower", "chi2_upper_poly", "cross_product",
               "operator_norm", "singular_max", "singular_min",
               "eigen_max", "eigen_min")

_CHECK_FIELDS = {
    "kind": (_choice(_TAIL_KINDS), _MISSING),
    "params": (_param_dict, _MISSING),
}

_CONCENTRATION_FIELDS = {
    "checks": (_record_list(_CHECK_FIELDS), _MISSING),
    "reps": (_as_int, 100000),
    "master_seed": (_as_int, 0),
}

_SIGN_FIELDS = {"m": (_as_int, _MISSING)}

_SUPPORT_FIELDS = {
    "n_pool": (_as_int, _MISSING),
    "m": (_as_int, _MISSING),
    "max_overlap": (_as_int, _MISSING),
}

_PACKING_FIELDS = {
    "sign": (_record_list(_SIGN_FIELDS, allow_empty=True), []),
    "supports": (_record_list(_SUPPORT_FIELDS, allow_empty=True), []),
    "max_candidates": (_as_int, 50000),
    "master_seed": (_as_int, 0),
}

_ESTIMATE_FIELDS = {
    "estimator": (_choice(("opca", "spca", "aspca")), "aspca"),
    "n_components": (_as_int, 1),
    "spca_gamma_mult": (_as_num, 4.0),
    "config": (_record(_ESTCFG_FIELDS),
               {k: d for k, (c, d) in _ESTCFG_FIELDS.items()}),
    "delimiter": (_as_str, ","),
}


# ---------------------------------------------------------------------------
# config plumbing

def _load_config(path, default=None):
    if path is None:
        if default is not None:
            return dict(default)
        raise ConfigError("--config <file.json> is required for this command")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError("cannot read config %s (%s)" % (path, exc))
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError("config %s is not valid JSON (%s)" % (path, exc))
    if not isinstance(cfg, dict):
        raise ConfigError("config %s: the top level must be an object" % path)
    return cfg


def _as_list_index(part, where, size):
    try:
        idx = int(part)
    except ValueError:
        raise ConfigError("--override %s: %r is not a list index"
                          % (where, part))
    if not -size <= idx < size:
        raise ConfigError("--override %s: index %d is out of range"
                          % (where, idx))
    return idx


def _apply_overrides(cfg, overrides):
    """Apply key=value entries; dotted keys descend, values parse as JSON."""
    for item in overrides or ():
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError("--override expects key=value, got %r" % item)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw          # unquoted strings pass through verbatim
        node = cfg
        parts = key.split(".")
        for i, part in enumerate(parts[:-1]):
            where = ".".join(parts[:i + 1])
            if isinstance(node, list):
                node = node[_as_list_index(part, where, len(node))]
            elif isinstance(node, dict):
                node = node.setdefault(part, {})
            else:
                raise ConfigError("--override %s: cannot descend into a scalar"
                                  % where)
        if isinstance(node, list):
            node[_as_list_index(parts[-1], key, len(node))] = value
        elif isinstance(node, dict):
            node[parts[-1]] = value
        else:
            raise ConfigError("--override %s: cannot descend into a scalar"
                              % key)
    return cfg


def _merge_flags(cfg, args, seed=True, reps=True):
    # dedicated flags beat both the file and --override entries
    if seed and args.seed is not None:
        cfg["master_seed"] = args.seed
    if reps and args.reps is not None:
        cfg["reps"] = args.reps
    return cfg


def _out_dir(args):
    if args.out is None:
        raise ConfigError("--out <dir> is required")
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _write_text(out, name, text):
    with open(os.path.join(out, name), "w", encoding="utf-8",
              newline="") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# estimate

def _load_matrix(path, delimiter, header):
    try:
        data = np.loadtxt(path, delimiter=delimiter, ndmin=2,
                          skiprows=1 if header else 0)
    except OSError as exc:
        raise ConfigError("input parsing: cannot read %s (%s)" % (path, exc))
    except ValueError as exc:
        raise ConfigError("input parsing: %s is not a numeric matrix (%s)"
                          % (path, exc))
    if data.size == 0:
        raise ConfigError("input parsing: %s is empty" % path)
    return data


def _opca_result(data, k, est_cfg):
    vecs = opca(data=data, n_components=k, center=est_cfg.center)
    S = sample_covariance(data, center=est_cfg.center)
    if est_cfg.sigma2_known is not None:
        sigma2, estimated = float(est_cfg.sigma2_known), False
    else:
        sigma2, estimated = estimate_noise_variance(S), True
    vals = np.einsum("ij,ij->j", vecs, S @ vecs)
    return EstimationResult(
        method="opca", rank=k,
        spike_estimates=vals - sigma2,
        components=vecs,
        components_thresholded=vecs.copy(),
        stage1_support=np.arange(data.shape[1]),
        stage2_support=np.zeros(0, dtype=int),
        noise_variance=sigma2, noise_estimated=estimated,
        fallback_used=False)


def cmd_estimate(args):
    cfg = _apply_overrides(_load_config(args.config, default={}),
                           args.override)
    cfg = _validate_record(cfg, _ESTIMATE_FIELDS, "estimate")
    data = _load_matrix(args.data, cfg["delimiter"], args.header)
    n, N = data.shape
    if n < 2:
        raise InfeasibleSpecError("need at least 2 observations, got %d" % n)
    if N < 2:
        raise InfeasibleSpecError("need at least 2 coordinates, got %d" % N)
    est_cfg = EstimatorConfig(**cfg["config"])
    if cfg["estimator"] == "opca":
        result = _opca_result(data, cfg["n_components"], est_cfg)
    elif cfg["estimator"] == "spca":
        gamma_n = cfg["spca_gamma_mult"] * math.sqrt(math.log(max(n, N)) / n)
        result = spca(data=data, gamma_n=gamma_n,
                      n_components=cfg["n_components"], config=est_cfg)
    else:
        result = aspca(data=data, config=est_cfg)

    out = _out_dir(args)
    digest = config_sha256(cfg)
    document = {
        "kind": "estimation-result",
        "config": cfg,
        "config_sha256": digest,
        "data_path": args.data,
        "n": int(n),
        "N": int(N),
        "result": result.to_document(),
    }
    _write_text(out, "result.json", dump_json(document))
    comp = result.components_thresholded
    if comp is None:
        comp = result.components
    header = ["coordinate"] + ["component_%d" % (j + 1)
                               for j in range(comp.shape[1])]
    rows = [[k] + [comp[k, j] for j in range(comp.shape[1])]
            for k in range(N)]
    _write_text(out, "components.csv",
                csv_text(header, rows, ("config_sha256=%s" % digest,)))
    if result.fallback_used and est_cfg.M_known is None:
        print("spikedpca estimate: variance screening (stage 1) selected "
              "nothing and no rank was supplied; wrote the fallback result",
              file=sys.stderr)
        return EXIT_FALLBACK
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate-risk

def cmd_simulate_risk(args):
    cfg = _apply_overrides(_load_config(args.config), args.override)
    _merge_flags(cfg, args)
    cfg = _validate_record(cfg, _SIMULATE_FIELDS, "simulate-risk")
    recipe = ModelRecipe(**cfg["model"])
    especs = []
    for entry in cfg["estimators"]:
        est_cfg = (EstimatorConfig(**entry["config"])
                   if entry["config"] is not None else None)
        especs.append(EstimatorSpec(name=entry["name"], config=est_cfg,
                                    spca_gamma_mult=entry["spca_gamma_mult"],
                                    label=entry["label"]))
    grid = [(g["n"], g["N"]) for g in cfg["grid"]]
    report = run_risk_mc(recipe, grid, especs, reps=cfg["reps"],
                         master_seed=cfg["master_seed"], nu=cfg["nu"],
                         noiseless=cfg["noiseless"], threads=args.threads,
                         abort_fraction=cfg["abort_fraction"],
                         config_record=cfg)
    for reg in cfg["regressions"]:
        report.slope_fits.append(rate_regression(
            report.rows, reg["predictor"], estimator=reg["estimator"],
            lambdas=recipe.lambdas, nu=cfg["nu"], q=recipe.q))
    out = _out_dir(args)
    _write_text(out, "risk.csv", report.to_csv())
    _write_text(out, "summary.json", dump_json(report.to_document()))
    if not args.no_figures:
        figures.save_risk_figure(report, os.path.join(out, "risk.png"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# lower-bound

def _build_family(cfg):
    kind = cfg["family"]
    n, N = cfg["n"], cfg["N"]
    lambdas = cfg["lambdas"]
    M, nu = len(lambdas), cfg["nu"]
    if kind == "two-point":
        if cfg["mu"] is None:
            raise ConfigError("lower-bound.mu: required for the "
                              "two-point family")
        return two_point_family(n, N, M, nu, cfg["mu"], lambdas)
    if cfg["q"] is None or cfg["radii"] is None:
        raise ConfigError("lower-bound.q and lower-bound.radii: required "
                          "for the %s family" % kind)
    if kind == "single-coordinate":
        return single_coordinate_family(N, M, nu, cfg["q"], cfg["radii"])
    if cfg["regime"] is None:
        raise ConfigError("lower-bound.regime: required for the "
                          "polar-sphere family")
    return polar_sphere_family(n, N, M, nu, lambdas, cfg["q"], cfg["radii"],
                               cfg["regime"], alpha=cfg["alpha"],
                               max_candidates=cfg["max_candidates"],
                               max_members=cfg["max_members"])


def cmd_lower_bound(args):
    cfg = _apply_overrides(_load_config(args.config), args.override)
    _merge_flags(cfg, args, reps=False)
    cfg = _validate_record(cfg, _LOWER_FIELDS, "lower-bound")
    family = _build_family(cfg)
    n, lambdas, nu = cfg["n"], cfg["lambdas"], cfg["nu"]
    M = len(lambdas)
    kl = (np.asarray(family.kl_to_base) if family.kl_to_base is not None
          else family.kl_values(lambdas, n))
    delta = cfg["delta"] if cfg["delta"] is not None \
        else family.loss_floor / 4.0
    bound = fano_bound(family, lambdas, n, delta)
    regime = None
    if cfg["q"] is not None and cfg["radii"] is not None:
        rc = minimax_rate(n, cfg["N"], M, cfg["q"], cfg["radii"][nu - 1],
                          lambdas[nu - 1], alpha=cfg["alpha"],
                          kappa_log=cfg["kappa_log"])
        regime = {"case_tag": rc.case_tag, "delta_n": rc.delta_n,
                  "constants": rc.constants}
    floor = cross_component_floor(n, lambdas, nu) if M >= 2 else None

    out = _out_dir(args)
    digest = config_sha256(cfg)
    document = {
        "kind": "lower-bound-certificate",
        "config": cfg,
        "config_sha256": digest,
        "master_seed": cfg["master_seed"],
        "family": {
            "kind": family.kind,
            "nu": family.nu,
            "cardinality": family.cardinality,
            "radius": family.radius,
            "sphere_dim": family.sphere_dim,
            "sign_support": family.sign_support,
            "loss_floor": family.loss_floor,
            "min_pairwise_loss": family.min_pairwise_loss,
            "regime": family.regime,
            "expected_kl": family.expected_kl,
            "details": family.details,
        },
        "kl": {
            "min": float(np.min(kl)),
            "max": float(np.max(kl)),
            "mean": float(np.mean(kl)),
            "expected": family.expected_kl,
        },
        "fano": {"delta": delta, "bound": bound},
        "minimax_rate": regime,
        "cross_component_floor": floor,
    }
    _write_text(out, "certificate.json", dump_json(document))
    rows = [[-1, int(k), family.base_point[k, nu - 1]]
            for k in np.flatnonzero(family.base_point[:, nu - 1])]
    for j, member in enumerate(family.members):
        rows.extend([[j, int(k), member[k, nu - 1]]
                     for k in np.flatnonzero(member[:, nu - 1])])
    _write_text(out, "members.csv",
                csv_text(("member", "coordinate", "value"), rows,
                         ("config_sha256=%s" % digest,)))
    if not args.no_figures:
        if regime is not None:
            rate_value = regime["delta_n"]
        else:
            rate_value = floor if floor is not None else math.nan
        figures.save_lower_bound_figure(family, bound, rate_value,
                                        os.path.join(out, "certificate.png"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# concentration-check

def cmd_concentration_check(args):
    cfg = _apply_overrides(_load_config(args.config), args.override)
    _merge_flags(cfg, args)
    cfg = _validate_record(cfg, _CONCENTRATION_FIELDS, "concentration-check")
    checks = []
    for i, entry in enumerate(cfg["checks"]):
        # one independent stream per check, offset from the master seed
        checks.append(concentration_mc(entry["kind"], entry["params"],
                                       cfg["reps"], cfg["master_seed"] + i))
    out = _out_dir(args)
    digest = config_sha256(cfg)
    header = ("kind", "params", "reps", "threshold", "bound", "empirical",
              "std_error", "holds", "seed")
    rows = [[c.kind, canonical_json(c.params), c.reps, c.threshold, c.bound,
             c.empirical, c.std_error, c.holds, c.seed] for c in checks]
    _write_text(out, "checks.csv",
                csv_text(header, rows, ("config_sha256=%s" % digest,
                                        "master_seed=%d" % cfg["master_seed"])))
    document = {
        "kind": "concentration-report",
        "config": cfg,
        "config_sha256": digest,
        "master_seed": cfg["master_seed"],
        "checks": [{
            "kind": c.kind, "params": c.params, "reps": c.reps,
            "threshold": c.threshold, "bound": c.bound,
            "empirical": c.empirical, "std_error": c.std_error,
            "holds": c.holds, "seed": c.seed,
        } for c in checks],
        "all_hold": all(c.holds for c in checks),
    }
    _write_text(out, "summary.json", dump_json(document))
    if not args.no_figures:
        figures.save_concentration_figure(checks,
                                          os.path.join(out, "checks.png"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# packing

def cmd_packing(args):
    cfg = _apply_overrides(_load_config(args.config), args.override)
    _merge_flags(cfg, args, reps=False)
    cfg = _validate_record(cfg, _PACKING_FIELDS, "packing")
    if not cfg["sign"] and not cfg["supports"]:
        raise ConfigError("packing: need at least one entry under "
                          "'sign' or 'supports'")
    signs = [sign_vector_packing(e["m"], cfg["max_candidates"])
             for e in cfg["sign"]]
    sups = [support_packing(e["n_pool"], e["m"], e["max_overlap"],
                            cfg["max_candidates"])
            for e in cfg["supports"]]
    out = _out_dir(args)
    digest = config_sha256(cfg)
    header = ("family", "m", "m0", "n_pool", "max_overlap", "count",
              "exhaustive", "candidates_scanned", "asymptotic_floor_log")
    rows = [["sign", p.m, p.m0, None, None, p.count, p.exhaustive,
             p.candidates_scanned, p.asymptotic_floor_log] for p in signs]
    rows += [["supports", p.m, None, p.n_pool, p.max_overlap, p.count,
              p.exhaustive, p.candidates_scanned, p.asymptotic_floor_log]
             for p in sups]
    _write_text(out, "packing.csv",
                csv_text(header, rows, ("config_sha256=%s" % digest,)))
    document = {
        "kind": "packing-report",
        "config": cfg,
        "config_sha256": digest,
        "master_seed": cfg["master_seed"],
        "sign": [{
            "m": p.m, "m0": p.m0, "count": p.count,
            "exhaustive": p.exhaustive,
            "candidates_scanned": p.candidates_scanned,
            "asymptotic_floor_log": p.asymptotic_floor_log,
            "vectors": p.vectors,
        } for p in signs],
        "supports": [{
            "n_pool": p.n_pool, "m": p.m, "max_overlap": p.max_overlap,
            "count": p.count, "exhaustive": p.exhaustive,
            "candidates_scanned": p.candidates_scanned,
            "asymptotic_floor_log": p.asymptotic_floor_log,
            "supports": [list(s) for s in p.supports],
        } for p in sups],
    }
    _write_text(out, "summary.json", dump_json(document))
    if not args.no_figures:
        figures.save_packing_overview(signs, sups,
                                      os.path.join(out, "packing.png"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify

def _verify_one(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        return "cannot read JSON (%s)" % exc
    if not isinstance(doc, dict) or "config" not in doc \
            or "config_sha256" not in doc:
        return "no embedded config/config_sha256 pair"
    actual = config_sha256(doc["config"])
    if actual != doc["config_sha256"]:
        return "hash mismatch: embedded %s, recomputed %s" \
            % (doc["config_sha256"], actual)
    return None


def cmd_verify(args):
    paths = []
    for item in args.paths:
        if os.path.isdir(item):
            paths.extend(sorted(os.path.join(item, name)
                                for name in os.listdir(item)
                                if name.endswith(".json")))
        else:
            paths.append(item)
    if not paths:
        print("spikedpca verify: no JSON documents found", file=sys.stderr)
        return 1
    failures = 0
    for path in paths:
        problem = _verify_one(path)
        if problem is None:
            print("OK %s" % path)
        else:
            failures += 1
            print("FAIL %s: %s" % (path, problem))
    return 1 if failures else EXIT_OK


# ---------------------------------------------------------------------------
# entry point

def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="JSON config file for the command")
    common.add_argument("--out", metavar="DIR",
                        help="directory receiving every output file")
    common.add_argument("--seed", type=int, metavar="U64",
                        help="override the config's master_seed")
    common.add_argument("--reps", type=int, metavar="INT",
                        help="override the config's replication count")
    common.add_argument("--threads", type=int, default=1, metavar="INT",
                        help="worker threads for replications (default 1)")
    common.add_argument("--override", action="append", default=[],
                        metavar="KEY=VALUE",
                        help="set a config field by dotted path; the value "
                             "parses as JSON (repeatable)")
    common.add_argument("--no-figures", action="store_true",
                        help="skip PNG rendering")

    parser = argparse.ArgumentParser(
        prog="spikedpca",
        description="Sparse principal component estimation under spiked "
                    "covariance: estimation, risk simulation, lower-bound "
                    "certificates, and tail-bound checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", parents=[common],
                       help="run an estimator on a CSV data matrix")
    p.add_argument("data", metavar="DATA_CSV",
                   help="observations in rows, coordinates in columns")
    p.add_argument("--header", action="store_true",
                   help="skip one header row in the input CSV")

    sub.add_parser("simulate-risk", parents=[common],
                   help="Monte Carlo risk curves over an (n, N) grid")
    sub.add_parser("lower-bound", parents=[common],
                   help="build a packing family and its risk lower bound")
    sub.add_parser("concentration-check", parents=[common],
                   help="empirical tail frequencies against closed-form "
                        "bounds")
    sub.add_parser("packing", parents=[common],
                   help="construct sign-vector and support packings")

    v = sub.add_parser("verify",
                       help="recheck the config hashes embedded in JSON "
                            "outputs")
    v.add_argument("paths", nargs="+", metavar="PATH",
                   help="JSON documents or directories containing them")
    return parser


_HANDLERS = {
    "estimate": cmd_estimate,
    "simulate-risk": cmd_simulate_risk,
    "lower-bound": cmd_lower_bound,
    "concentration-check": cmd_concentration_check,
    "packing": cmd_packing,
    "verify": cmd_verify,
}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    handler = _HANDLERS[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print("spikedpca %s: %s" % (args.command, exc), file=sys.stderr)
        return EXIT_PARSE
    except (InfeasibleSpecError, InfeasibleRegimeError, RetryExhaustedError,
            ValueError) as exc:
        print("spikedpca %s: infeasible configuration: %s"
              % (args.command, exc), file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
