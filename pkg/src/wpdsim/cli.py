"""Command-line runner: INI configuration, experiment dispatch, CSV export.

Configuration files are INI with three sections. Every key is optional and
defaults to the device values used throughout the package::

    [device]      chi_mhz, t1_us, tphi_us, tau_s_us, n_th, p_e_thermal,
                  kerr_self_mhz, kerr_cross_extra_mhz, rotation_sigma_ns,
                  readout_fidelity_g, readout_fidelity_e,
                  pi2_pulse_ns, selective_pi_ns, selective_pi_long_ns,
                  readout_ns, resync_idle_ns, displacement_ns
    [hilbert]     fock_dim, strict
    [protocol]    experiment, output_path, mode, theta, alpha, phi_points,
                  readout_confusion, explicit_init, sweep, dt_ns, gate_timing

Angles (``theta``) are in units of pi; ``theta`` may be a comma list for the
ramsey experiment (one CSV per value). Frequencies are cyclic (MHz).

Output files (all written atomically at the end of a run):

* curves:   ``phi_rad,branch_label,probability,mode``
* wigner:   ``x,y,W``
* density:  ``row,col,re,im``
* ledger:   ``outcome_sequence<TAB>probability``
* ``summary.txt``: ``metric, value, target, tol, PASS|FAIL|INFO``
* ``effective_config.ini``: the fully resolved configuration

Numbers are printed with 12 significant digits.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
import tempfile
from dataclasses import dataclass, field
from math import pi
from pathlib import Path

import numpy as np

from .hilbert import HilbertConfig, TruncationError, required_fock_dim
from .noise import EvolutionMode
from .operators import DeviceParams, Durations
from .protocols import (
    ALPHA,
    ProtocolParams,
    analytic_pg_exact,
    cat_success_probability,
    cat_target,
    delayed_choice_curves,
    eraser_curves,
    overlap_free_prediction,
    prepare_cat,
    ramsey_curve,
    which_path_curves,
)
from .tomography import contrast, fidelity, reconstruct_density, visibility, wigner_grid

EXPERIMENTS = ("ramsey", "delayed-choice", "eraser", "eraser-after-on", "which-path", "wigner", "cat-prep")
OUTPUT_ENV = "WPDSIM_OUTPUT_DIR"
CURVE_HEADER = "phi_rad,branch_label,probability,mode"


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def _fmt(x) -> str:
    return f"{x:.12g}"


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float_list(text: str) -> tuple[float, ...]:
    items = [t for t in text.replace(" ", "").split(",") if t]
    if not items:
        raise ValueError("empty list")
    return tuple(float(t) for t in items)


def _str(text: str) -> str:
    return text.strip()


_dev = DeviceParams()
_dur = Durations()

# section -> key -> (parser, default); defaults are the config-space values
SCHEMA: dict[str, dict[str, tuple]] = {
    "device": {
        "chi_mhz": (float, round(_dev.chi_qs_hz / 1e6, 9)),
        "t1_us": (float, round(_dev.T1 * 1e6, 6)),
        "tphi_us": (float, round(_dev.Tphi * 1e6, 6)),
        "tau_s_us": (float, round(_dev.tau_s * 1e6, 6)),
        "n_th": (float, _dev.n_th),
        "p_e_thermal": (float, _dev.p_e_thermal),
        "kerr_self_mhz": (float, 0.0),
        "kerr_cross_extra_mhz": (float, 0.0),
        "rotation_sigma_ns": (float, 0.0),
        "readout_fidelity_g": (float, _dev.readout_confusion[0][0]),
        "readout_fidelity_e": (float, _dev.readout_confusion[1][1]),
        "pi2_pulse_ns": (float, round(_dur.pi2_pulse * 1e9, 6)),
        "selective_pi_ns": (float, round(_dur.selective_pi * 1e9, 6)),
        "selective_pi_long_ns": (float, round(_dur.selective_pi_long * 1e9, 6)),
        "readout_ns": (float, round(_dur.readout * 1e9, 6)),
        "resync_idle_ns": (float, round(_dur.resync_idle * 1e9, 6)),
        "displacement_ns": (float, round(_dur.displacement * 1e9, 6)),
    },
    "hilbert": {
        "fock_dim": (int, 40),
        "strict": (_bool, True),
    },
    "protocol": {
        "experiment": (_str, "ramsey"),
        "output_path": (_str, ""),
        "mode": (_str, "ideal"),
        "theta": (_float_list, (0.25,)),
        "alpha": (float, ALPHA),
        "phi_points": (int, 41),
        "readout_confusion": (_bool, False),
        "explicit_init": (_bool, False),
        "sweep": (_str, "harmonic"),
        "dt_ns": (float, 1.0),
        "gate_timing": (_str, "split"),
    },
}


def _render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class RunConfig:
    """Typed configuration values, keyed like the INI file.

    Equality compares these values, so ``load(write(cfg)) == cfg`` is the
    round-trip property. Domain objects are built on demand.
    """

    values: dict = field(default_factory=dict)

    def __getitem__(self, key: str):
        section, name = key.split(".")
        return self.values[section][name]

    @property
    def experiment(self) -> str:
        return self["protocol.experiment"]

    @property
    def output_path(self) -> Path:
        raw = self["protocol.output_path"]
        return Path(raw or os.environ.get(OUTPUT_ENV, "wpdsim_output"))

    @property
    def thetas(self) -> tuple[float, ...]:
        return tuple(t * pi for t in self["protocol.theta"])

    @property
    def device(self) -> DeviceParams:
        v = self.values["device"]
        g, e = v["readout_fidelity_g"], v["readout_fidelity_e"]
        durations = Durations(
            pi2_pulse=v["pi2_pulse_ns"] * 1e-9,
            selective_pi=v["selective_pi_ns"] * 1e-9,
            selective_pi_long=v["selective_pi_long_ns"] * 1e-9,
            readout=v["readout_ns"] * 1e-9,
            resync_idle=v["resync_idle_ns"] * 1e-9,
            displacement=v["displacement_ns"] * 1e-9,
        )
        return DeviceParams(
            chi_qs=2 * pi * v["chi_mhz"] * 1e6,
            T1=v["t1_us"] * 1e-6,
            Tphi=v["tphi_us"] * 1e-6,
            tau_s=v["tau_s_us"] * 1e-6,
            n_th=v["n_th"],
            p_e_thermal=v["p_e_thermal"],
            kerr_self=2 * pi * v["kerr_self_mhz"] * 1e6,
            kerr_cross_extra=2 * pi * v["kerr_cross_extra_mhz"] * 1e6,
            readout_confusion=((g, 1 - e), (1 - g, e)),
            rotation_sigma=v["rotation_sigma_ns"] * 1e-9,
            durations=durations,
        )

    @property
    def hilbert(self) -> HilbertConfig:
        return HilbertConfig(self["hilbert.fock_dim"], self["hilbert.strict"])

    @property
    def mode(self) -> EvolutionMode:
        return EvolutionMode(self["protocol.mode"], self["protocol.dt_ns"] * 1e-9, self["protocol.gate_timing"])

    def protocol(self, theta: float | None = None, jobs: int = 1) -> ProtocolParams:
        n = self["protocol.phi_points"]
        return ProtocolParams(
            theta=self.thetas[0] if theta is None else theta,
            alpha=self["protocol.alpha"],
            phi_grid=np.linspace(0, 2 * pi, n),
            mode=self.mode,
            readout_confusion=self["protocol.readout_confusion"],
            explicit_init=self["protocol.explicit_init"],
            sweep=self["protocol.sweep"],
            jobs=jobs,
        )

    def with_overrides(self, **flat) -> RunConfig:
        """Copy with ``section.key`` overrides given as already-typed values."""
        values = {s: dict(v) for s, v in self.values.items()}
        for key, value in flat.items():
            section, name = key.split("__")
            values[section][name] = value
        cfg = RunConfig(values)
        validate(cfg)
        return cfg


def defaults() -> RunConfig:
    return RunConfig({s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()})


def _parse_error_line(exc: configparser.Error) -> str:
    line = getattr(exc, "lineno", None)
    if line is None and getattr(exc, "errors", None):
        line = exc.errors[0][0]
    return f" (line {line})" if line is not None else ""


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: parse error{_parse_error_line(exc)}: {exc}") from exc
    values = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
    lines = text.splitlines()
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key {section}.{key}")
            parser = SCHEMA[section][key][0]
            try:
                values[section][key] = parser(raw)
            except ValueError as exc:
                lineno = next((i + 1 for i, ln in enumerate(lines) if ln.strip().startswith(key)), None)
                where = f" (line {lineno})" if lineno else ""
                raise ConfigError(f"{source}: {section}.{key}{where}: {exc}") from exc
    cfg = RunConfig(values)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    """Build every domain object once so that errors name the field."""
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"protocol.experiment: {cfg.experiment!r} is not one of {', '.join(EXPERIMENTS)}")
    if cfg["device.chi_mhz"] == 0:
        raise ConfigError("device.chi_mhz: must be nonzero")
    for key in ("t1_us", "tphi_us", "tau_s_us"):
        if not cfg[f"device.{key}"] > 0:
            raise ConfigError(f"device.{key}: must be > 0")
    for key in ("readout_fidelity_g", "readout_fidelity_e"):
        if not 0 <= cfg[f"device.{key}"] <= 1:
            raise ConfigError(f"device.{key}: must lie in [0, 1]")
    if cfg["hilbert.fock_dim"] < 2:
        raise ConfigError("hilbert.fock_dim: must be >= 2")
    if cfg["protocol.phi_points"] < 1:
        raise ConfigError("protocol.phi_points: must be >= 1")
    checks = [
        ("device", lambda: cfg.device),
        ("protocol.mode", lambda: cfg.mode),
        ("protocol", lambda: cfg.protocol()),
    ]
    for name, build in checks:
        try:
            build()
        except ValueError as exc:
            raise ConfigError(f"{name}: {exc}") from exc
    alpha, n = cfg["protocol.alpha"], cfg["hilbert.fock_dim"]
    need = required_fock_dim(alpha)
    if cfg["hilbert.strict"] and need > n:
        raise ConfigError(
            f"protocol.alpha: |alpha|={abs(alpha):.4g} needs hilbert.fock_dim >= {need}, got {n}"
        )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from exc
    return parse_config_text(text, str(path))


def write_config(cfg: RunConfig) -> str:
    out = []
    for section, keys in SCHEMA.items():
        out.append(f"[{section}]")
        out += [f"{k} = {_render(cfg.values[section][k])}" for k in keys]
        out.append("")
    return "\n".join(out)


# ---------------------------------------------------------------- outputs


@dataclass(frozen=True)
class Metric:
    name: str
    value: float
    target: float | None = None
    tol: float | None = None

    @property
    def status(self) -> str:
        if self.target is None:
            return "INFO"
        return "PASS" if abs(self.value - self.target) <= self.tol else "FAIL"

    def line(self) -> str:
        t = "-" if self.target is None else _fmt(self.target)
        tol = "-" if self.tol is None else _fmt(self.tol)
        return f"{self.name}, {_fmt(self.value)}, {t}, {tol}, {self.status}"


@dataclass
class Results:
    files: dict[str, str] = field(default_factory=dict)
    metrics: list[Metric] = field(default_factory=list)

    def add(self, name, value, target=None, tol=None):
        self.metrics.append(Metric(name, float(value), target, tol))

    @property
    def ok(self) -> bool:
        return all(m.status != "FAIL" for m in self.metrics)


def emit_summary(results: Results) -> str:
    if not results.metrics:
        raise ValueError("no metrics to summarise")
    return "metric, value, target, tol, status\n" + "\n".join(m.line() for m in results.metrics) + "\n"


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def curves_csv(curves) -> str:
    rows = [CURVE_HEADER]
    for c in curves:
        rows += c.csv_rows()
    return "\n".join(rows) + "\n"


def density_csv(rho: np.ndarray) -> str:
    rows = ["row,col,re,im"]
    for i in range(rho.shape[0]):
        rows += [f"{i},{j},{_fmt(rho[i, j].real)},{_fmt(rho[i, j].imag)}" for j in range(rho.shape[1])]
    return "\n".join(rows) + "\n"


def wigner_csv(grid) -> str:
    x, y = np.meshgrid(grid.re_axis, grid.im_axis)
    rows = ["x,y,W"]
    rows += [f"{_fmt(a)},{_fmt(b)},{_fmt(w)}" for a, b, w in zip(x.ravel(), y.ravel(), grid.values.ravel())]
    return "\n".join(rows) + "\n"


def _theta_tag(t_pi: float) -> str:
    return f"{t_pi:.6g}".replace(".", "p") + "pi"


# ---------------------------------------------------------------- experiments


def _ramsey(cfg: RunConfig, res: Results, jobs: int) -> None:
    ideal = not cfg.mode.noisy
    for t_pi, theta in zip(cfg["protocol.theta"], cfg.thetas):
        params = cfg.protocol(theta, jobs)
        c = ramsey_curve(params, device=cfg.device, cfg=cfg.hilbert)
        tag = _theta_tag(t_pi)
        res.files[f"ramsey_theta_{tag}.csv"] = curves_csv([c])
        res.add(f"ramsey_{tag}_visibility", visibility(c))
        if ideal:
            exact = analytic_pg_exact(theta, params.alpha, c.phi)
            res.add(f"ramsey_{tag}_max_dev_exact", np.max(np.abs(c.value - exact)), 0.0, 1e-6)
            res.add(f"ramsey_{tag}_max_dev_overlap_free", np.max(np.abs(c.value - overlap_free_prediction(theta, c.phi))), 0.0, 0.02)


def _delayed_choice(cfg: RunConfig, res: Results, jobs: int) -> None:
    curves = delayed_choice_curves(cfg.protocol(jobs=jobs), device=cfg.device, cfg=cfg.hilbert)
    res.files["delayed_choice.csv"] = curves_csv(curves.values())
    f, o = curves["P_{g;F}"], curves["P_{g;O}"]
    if cfg.mode.noisy:
        res.add("P_gF_visibility", visibility(f), 0.89, 0.05)
        res.add("P_gO_contrast", contrast(o), 0.04, 0.04)
    else:
        res.add("P_gF_visibility", visibility(f), 1.0, 1e-6)
        res.add("P_gO_contrast", contrast(o), 0.0, 1e-3)


def _eraser(cfg: RunConfig, res: Results, jobs: int) -> None:
    curves = eraser_curves(cfg.protocol(jobs=jobs), device=cfg.device, cfg=cfg.hilbert)
    res.files["eraser.csv"] = curves_csv(curves.values())
    plus, minus = curves["P_{g;+}"], curves["P_{g;-}"]
    if cfg.mode.noisy:
        res.add("P_g+_visibility", visibility(plus), 0.82, 0.10)
        res.add("P_g-_visibility", visibility(minus), 0.50, 0.10)
    else:
        phi = plus.phi
        res.add("P_g+_max_dev_ideal", np.max(np.abs(plus.value - (1 - np.cos(phi)) / 2)), 0.0, 2e-6)
        res.add("P_g-_max_dev_ideal", np.max(np.abs(minus.value - (1 + np.cos(phi)) / 2)), 0.0, 2e-6)


def _eraser_after_on(cfg: RunConfig, res: Results, jobs: int) -> None:
    curves = eraser_curves(cfg.protocol(jobs=jobs), True, device=cfg.device, cfg=cfg.hilbert)
    res.files["eraser_after_on.csv"] = curves_csv(curves.values())
    plus, minus = curves["P_{g;O,+}"], curves["P_{g;O,-}"]
    if cfg.mode.noisy:
        res.add("P_gO+_contrast", contrast(plus), 0.53, 0.10)
        res.add("P_gO-_contrast", contrast(minus), 0.48, 0.10)
    else:
        res.add("P_gO+_contrast", contrast(plus), 1.0, 1e-3)
        res.add("P_gO-_contrast", contrast(minus), 1.0, 1e-3)


def _which_path(cfg: RunConfig, res: Results, jobs: int) -> None:
    wp = which_path_curves(cfg.protocol(jobs=jobs), device=cfg.device, cfg=cfg.hilbert)
    res.files["which_path.csv"] = curves_csv(wp.curves.values())
    rows = ["phi_rad,outcome_sequence,probability,mode"]
    for k, vals in wp.sweep.joint.items():
        rows += [f"{_fmt(p)},{''.join(k)},{_fmt(v)},{wp.sweep.mode}" for p, v in zip(wp.sweep.phi, vals)]
    res.files["which_path_joint.csv"] = "\n".join(rows) + "\n"
    m, a = wp.means["P_{g;O,-alpha}"], wp.means["P_{g;O,alpha}"]
    if cfg.mode.noisy:
        res.add("P_gO-alpha_mean", m, 0.56, 0.01)
        res.add("P_gO+alpha_mean", a, 0.52, 0.02)
    else:
        res.add("P_gO-alpha_mean", m, 0.5, 1e-3)
        res.add("P_gO+alpha_mean", a, 0.5, 1e-3)
    res.add("P_gO-alpha_contrast", contrast(wp.curves["P_{g;O,-alpha}"]))
    res.add("P_gO+alpha_contrast", contrast(wp.curves["P_{g;O,alpha}"]))


def _prep(cfg: RunConfig):
    p = cfg.protocol()
    return p, prepare_cat(
        p.theta,
        p.alpha,
        p.mode,
        device=cfg.device,
        cfg=cfg.hilbert,
        readout_confusion=p.readout_confusion,
        explicit_init=p.explicit_init,
    )


def _cat_prep(cfg: RunConfig, res: Results, jobs: int) -> None:
    p, prep = _prep(cfg)
    res.files["cat_density.csv"] = density_csv(prep.cavity)
    f = prep.fidelity(p.theta, p.alpha, cfg.hilbert)
    if cfg.mode.noisy:
        res.add("cat_fidelity", f, 0.93, 0.04)
        res.add("cat_success_probability", prep.success_probability)
    else:
        res.add("cat_fidelity", f, 1.0, 1e-8)
        res.add("cat_success_probability", prep.success_probability, cat_success_probability(p.theta, p.alpha), 1e-8)


def _wigner(cfg: RunConfig, res: Results, jobs: int) -> None:
    p, prep = _prep(cfg)
    rho = prep.cavity
    grid = wigner_grid(rho)
    res.files["wigner.csv"] = wigner_csv(grid)
    d = min(20, cfg.hilbert.fock_dim)
    rec = reconstruct_density(grid, d)
    res.files["wigner_reconstruction.csv"] = density_csv(rec)
    res.add("wigner_min", grid.values.min())
    res.add("wigner_integral", grid.integral(), 1.0, 1e-3)
    res.add("wigner_has_negativity", float(grid.values.min() < 0), 1.0, 0.0)
    crop = rho[:d, :d] / np.trace(rho[:d, :d]).real
    res.add("reconstruction_fidelity", fidelity(crop, rec).fidelity, 1.0, 0.01)
    res.add("target_fidelity", fidelity(cat_density(p, d), rec).fidelity)


def cat_density(p: ProtocolParams, dim: int) -> np.ndarray:
    psi = cat_target(p.theta, p.alpha, HilbertConfig(dim, strict=False))
    return np.outer(psi, psi.conj())


RUNNERS = {
    "ramsey": _ramsey,
    "delayed-choice": _delayed_choice,
    "eraser": _eraser,
    "eraser-after-on": _eraser_after_on,
    "which-path": _which_path,
    "wigner": _wigner,
    "cat-prep": _cat_prep,
}


def run_experiment(cfg: RunConfig, jobs: int = 1) -> Results:
    """Run the configured experiment and write every output file.

    Returns the results; ``results.ok`` is False when any tolerance check fails.
    """
    res = Results()
    RUNNERS[cfg.experiment](cfg, res, jobs)
    out = cfg.output_path
    files = dict(res.files)
    files["summary.txt"] = emit_summary(res)
    files["effective_config.ini"] = write_config(cfg)
    for name in sorted(files):
        _atomic_write(out / name, files[name])
    return res


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wpdsim", description="Two-fold delayed-choice simulator")
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="INI configuration file")
        sp.add_argument("--output-dir", type=Path, help=f"output directory (default ${OUTPUT_ENV} or config)")
        sp.add_argument("--mode", choices=("ideal", "noisy"), help="override protocol.mode")
        sp.add_argument("--jobs", type=int, default=1, help="threads for sweep points")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else defaults()
        over = {"protocol__experiment": args.experiment}
        if args.mode:
            over["protocol__mode"] = args.mode
        if args.output_dir:
            over["protocol__output_path"] = str(args.output_dir)
        cfg = cfg.with_overrides(**over)
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
    except (ConfigError, TruncationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    print(write_config(cfg), end="")
    try:
        res = run_experiment(cfg, args.jobs)
    except (ValueError, RuntimeError) as exc:
        print(f"{cfg.experiment} failed: {exc}", file=sys.stderr)
        return 1
    print(emit_summary(res), end="")
    print(f"wrote {len(res.files) + 2} files to {cfg.output_path}")
    return 0 if res.ok else 1


if __name__ == "__main__":
    sys.exit(main())
