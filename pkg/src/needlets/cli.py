"""Command-line front end.

    needlets <command> --config FILE --out DIR [--workers N]

Commands: filter, simulate, transform, corr, gof, mask.  Exit codes:
0 ok, 2 config error, 3 numeric or assumption failure, 4 resource limit.
"""

from __future__ import annotations

import argparse
import json
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .errors import InvalidArgument, NeedletError
from .filter_bank import build_profile, partition_of_unity_error, save_profile, support, window_weights
from .harmonics import HarmonicCoefficients
from .masking import SkyMask, binned_profile, calibrate_cm, masked_fraction, run_mask_experiment
from .needlet_transform import (
    coeff_variance,
    cross_scale_correlation_mc,
    cross_scale_covariance,
    decay_diagnostic,
    needlet_coeffs,
)
from .random_field import (
    PowerSpectrum,
    load_spectrum,
    power_law_spectrum,
    replicate_seed,
    sample_alm,
    sample_alm_batch,
)
from .sphere_geom import build_grid, grid_for_scale
from .statistics import HermiteWeights, ScaleModel, gof_presets, gof_test, ks_threshold
from .tables import write_table

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_RESOURCE = 0, 2, 3, 4


class ConfigError(NeedletError):
    exit_code = EXIT_CONFIG


@dataclass
class CampaignConfig:
    B: float = 2.0
    alpha: float = 3.0
    amplitude: float = 1.0
    spectrum_file: str | None = None
    l_max: int | None = None
    scales: list[int] = field(default_factory=lambda: [3, 4, 5])
    replicates: int = 200
    seed: int = 12345
    preset: str = "gof"
    weights: list[list[float]] | None = None
    mask: str = "band"
    mask_bands: list[tuple[float, float]] = field(default_factory=list)
    mask_discs: list[tuple[float, float, float]] = field(default_factory=list)
    level: float = 0.05
    component: int = 1
    M: float = 3.0
    resolution: int = 4096
    workers: int = 1

    @property
    def top_degree(self) -> int:
        return self.l_max if self.l_max is not None else max(self._upper(j) for j in self.scales)

    def _upper(self, j: int) -> int:
        return support(build_profile(self.B, 16), j)[1]

    def validate(self) -> None:
        if not self.B > 1:
            raise ConfigError(f"B must satisfy B > 1 (got {self.B})")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if not 0.0 < self.level < 1.0:
            raise ConfigError("level must lie in (0, 1)")
        if not self.scales or any(j < 0 for j in self.scales):
            raise ConfigError("scales must be a nonempty list of nonnegative integers")
        for j in self.scales:
            if self._upper(j) > self.top_degree:
                raise ConfigError(f"scale {j} needs l up to {self._upper(j)} but l_max = {self.top_degree}")
        self.hermite_weights()
        self.sky_mask()

    def hermite_weights(self) -> HermiteWeights:
        if self.weights is not None:
            try:
                return HermiteWeights(np.array(self.weights))
            except InvalidArgument as exc:
                raise ConfigError(str(exc)) from exc
        if self.preset != "gof":
            raise ConfigError(f"unknown weight preset {self.preset!r}")
        return gof_presets()

    def sky_mask(self) -> SkyMask:
        if self.mask == "empty":
            return SkyMask.empty()
        if self.mask == "full":
            return SkyMask.everything()
        bands = self.mask_bands or [(math.pi / 2 - 0.2, math.pi / 2 + 0.2)]
        try:
            return SkyMask(tuple(bands), tuple(self.mask_discs))
        except InvalidArgument as exc:
            raise ConfigError(str(exc)) from exc

    def spectrum(self) -> PowerSpectrum:
        try:
            if self.spectrum_file:
                spec = load_spectrum(self.spectrum_file)
                if spec.l_max < self.top_degree:
                    raise ConfigError(f"spectrum file stops at l = {spec.l_max} < {self.top_degree}")
                return spec.truncated(self.top_degree)
            return power_law_spectrum(self.alpha, self.amplitude, self.top_degree)
        except InvalidArgument as exc:
            raise ConfigError(str(exc)) from exc

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["l_max"] = self.top_degree
        return d


def _angle(text: str) -> float:
    text = text.strip()
    if text.endswith("rad"):
        return float(text[:-3])
    if text.endswith("deg") or text.endswith("°"):
        raise ConfigError(f"angles must be given in radians ('{text}' uses degrees)")
    raise ConfigError(f"angle '{text}' needs an explicit 'rad' unit")


def parse_config(text: str) -> CampaignConfig:
    """Flat ``key = value`` lines; ``#`` starts a comment; mask entries may repeat."""
    cfg = CampaignConfig()
    converters = {
        "B": float,
        "alpha": float,
        "amplitude": float,
        "l_max": int,
        "replicates": int,
        "seed": int,
        "level": float,
        "component": int,
        "M": float,
        "resolution": int,
        "workers": int,
        "spectrum_file": str,
        "preset": str,
        "mask": str,
    }
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not value:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        try:
            if key in converters:
                setattr(cfg, key, converters[key](value))
            elif key == "scales":
                cfg.scales = [int(v) for v in value.replace(",", " ").split()]
            elif key == "weights":
                cfg.weights = [[float(v) for v in row.replace(",", " ").split()] for row in value.split(";")]
            elif key == "mask_band":
                t1, t2 = (_angle(v) for v in value.split(","))
                cfg.mask_bands.append((t1, t2))
            elif key == "mask_disc":
                th, ph, r = (_angle(v) for v in value.split(","))
                cfg.mask_discs.append((th, ph, r))
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    if cfg.mask not in ("empty", "full", "band"):
        raise ConfigError(f"mask must be empty, full or band (got {cfg.mask!r})")
    cfg.validate()
    return cfg


def write_manifest(out: Path, command: str, cfg: CampaignConfig, started: float, extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "config": cfg.as_dict(),
        "seed": cfg.seed,
        "versions": {
            "needlets": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "wall_time_s": round(time.time() - started, 3),
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _dump(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_filter(cfg: CampaignConfig, out: Path) -> dict:
    profile = build_profile(cfg.B, cfg.resolution)
    save_profile(profile, out / "profile.txt")
    L = cfg.top_degree
    rows = []
    for j in sorted(set(cfg.scales)):
        w = window_weights(profile, j, L)
        rows += [(j, l, float(w[l])) for l in range(L + 1) if w[l] > 0.0]
    write_table(out / "window_weights.tsv", ["j", "l", "b"], rows)
    err = partition_of_unity_error(profile, L)
    print(f"partition of unity: max |sum_j b^2(l/B^j) - 1| = {err:.3e} for 1 <= l <= {L}")
    return {"partition_of_unity_max_deviation": err}


def cmd_simulate(cfg: CampaignConfig, out: Path) -> dict:
    spec = cfg.spectrum()
    spec.save(out / "spectrum.txt")
    coeffs = sample_alm(spec, cfg.seed)
    coeffs.save(out / "alm.txt")
    grid = build_grid(2 * spec.l_max)
    from .harmonics import synthesize

    values = synthesize(coeffs, grid)
    write_table(out / "field.tsv", ["theta", "phi", "weight", "value"], zip(grid.theta, grid.phi, grid.weights, values))
    print(f"simulated field: l_max = {spec.l_max}, {grid.point_count} grid points, seed {cfg.seed}")
    return {"points": grid.point_count}


def cmd_transform(cfg: CampaignConfig, out: Path) -> dict:
    spec = cfg.spectrum()
    profile = build_profile(cfg.B, cfg.resolution)
    coeffs = sample_alm(spec, cfg.seed)
    rows = []
    for j in cfg.scales:
        grid = grid_for_scale(j, cfg.B)
        nc = needlet_coeffs(coeffs, profile, j, grid).normalized(coeff_variance(spec, profile, j, grid))
        rows += [
            (j, k, t, p, b, s, bh)
            for k, (t, p, b, s, bh) in enumerate(zip(grid.theta, grid.phi, nc.beta, nc.sigma2, nc.beta_hat))
        ]
        diag = decay_diagnostic(spec, profile, j, cfg.M, grid)
        write_table(
            out / f"decay_j{j}.tsv",
            ["d_radians", "abs_cor", "weighted_product"],
            zip(diag["d_radians"], diag["abs_cor"], diag["weighted_product"]),
        )
        print(f"scale {j}: {grid.point_count} coefficients, empirical C_M = {diag['weighted_product'].max():.4g}")
    write_table(out / "needlets.tsv", ["j", "k", "theta", "phi", "beta", "sigma2", "beta_hat"], rows)
    return {}


def cmd_corr(cfg: CampaignConfig, out: Path) -> dict:
    spec = cfg.spectrum()
    profile = build_profile(cfg.B, cfg.resolution)
    mc = cross_scale_correlation_mc(spec, profile, cfg.scales, cfg.replicates, cfg.seed, cfg.workers)
    rows = []
    for (a, b), c in sorted(mc.items()):
        formula = cross_scale_covariance(spec, profile, a, b, grid_for_scale(a, cfg.B), grid_for_scale(b, cfg.B), 0, 0)
        rows.append((a, b, c, formula))
        print(f"scales ({a}, {b}): pooled correlation {c:+.5f}, model covariance at pole {formula:.3e}")
    write_table(out / "cross_scale.tsv", ["j", "j2", "mc_correlation", "model_covariance_k0"], rows)
    return {"max_abs_corr_separated": max((abs(c) for (a, b), c in mc.items() if b - a >= 2), default=0.0)}


def run_gof_campaigns(cfg: CampaignConfig) -> tuple[list, list]:
    spec = cfg.spectrum()
    profile = build_profile(cfg.B, cfg.resolution)
    weights = cfg.hermite_weights()
    if not 1 <= cfg.component <= weights.U:
        raise ConfigError(f"component must lie in 1..{weights.U}")
    models = [ScaleModel(spec, profile, j, weights) for j in cfg.scales]
    seeds = [replicate_seed(cfg.seed, i) for i in range(cfg.replicates)]
    reports = []
    for s in range(0, len(seeds), 50):
        alm = sample_alm_batch(spec, seeds[s : s + 50], cfg.workers)
        for a in alm:
            reports.append(gof_test(spec, a, models, cfg.level, cfg.component - 1))
    return reports, models


def cmd_gof(cfg: CampaignConfig, out: Path) -> dict:
    reports, _ = run_gof_campaigns(cfg)
    write_table(
        out / "gof_campaigns.tsv",
        ["campaign", "ks_statistic", "p_value", "reject"],
        [(i, r.ks_statistic, r.p_value, int(r.reject)) for i, r in enumerate(reports)],
    )
    first = reports[0]
    first.metadata = {"replicates": cfg.replicates, "seed": cfg.seed, "component": cfg.component}
    _dump(out / "report.json", first.to_dict())
    rate = float(np.mean([r.reject for r in reports]))
    t = ks_threshold(cfg.level)
    verdict = "reject" if first.reject else "accept"
    print(f"statistic {first.ks_statistic:.4f}  threshold {t:.4f}  p-value {first.p_value:.4f}  {verdict} at level {cfg.level}")
    print(f"rejection rate over {len(reports)} campaigns: {rate:.4f}")
    return {"rejection_rate": rate}


def cmd_mask(cfg: CampaignConfig, out: Path) -> dict:
    spec = cfg.spectrum()
    profile = build_profile(cfg.B, cfg.resolution)
    j = cfg.scales[-1]
    mask = cfg.sky_mask()
    mask.save(out / "mask.txt")
    exp = run_mask_experiment(spec, profile, j, mask, cfg.replicates, cfg.seed, workers=cfg.workers)
    write_table(out / "dmap.tsv", ["theta", "phi", "D", "SE", "flag"], exp.table_rows())
    summary = {
        "scale": j,
        "masked_fraction": masked_fraction(exp.mask_raster, exp.grid),
        "flagged": int(exp.flagged.sum()),
        "flagged_fraction": float(exp.flagged.mean()),
        "max_D_unmasked": float(exp.D[~exp.mask_raster].max()) if (~exp.mask_raster).any() else None,
    }
    if exp.mask_raster.any() and (~exp.mask_raster).any():
        c, mu, se = binned_profile(exp.eps, exp.D, exp.D_se)
        write_table(out / "dprofile.tsv", ["clearance", "mean_D", "se"], zip(c, mu, se))
        summary["calibrated_C_M"] = calibrate_cm(exp.rms_gap, exp.eps, exp.V_star, cfg.B, j, cfg.M)
    _dump(out / "mask_summary.json", summary)
    print(f"scale {j}: {summary['flagged']} of {exp.grid.point_count} points with D > 0.1")
    return summary


COMMANDS = {
    "filter": cmd_filter,
    "simulate": cmd_simulate,
    "transform": cmd_transform,
    "corr": cmd_corr,
    "gof": cmd_gof,
    "mask": cmd_mask,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="needlets", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, type=Path)
    parser.add_argument("--out", required=True, type=Path)
    parser.add_argument("--workers", type=int, default=None, help="overrides the config value")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.time()
    try:
        try:
            text = args.config.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        cfg = parse_config(text)
        if args.workers is not None:
            cfg.workers = args.workers
        args.out.mkdir(parents=True, exist_ok=True)
        extra = COMMANDS[args.command](cfg, args.out)
        write_manifest(args.out, args.command, cfg, started, {"results": extra})
    except NeedletError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
