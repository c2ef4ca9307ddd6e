"""Command line entry point: ``pecem run`` and ``pecem report``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import warnings
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import io
from .assembly import assemble_forms
from .cem import build_auxiliary, build_cem_basis
from .coeff import PhysicsConstants, generate_streak_field, load_raster
from .config import CONFIG_SCHEMA, ConfigError, ExperimentConfig, preset
from .fine import TimeGrid, Trajectory, run_fine
from .grid import build_grid_pair
from .metrics import TABLE_STEPS, pressure_errors, read_error_csv, table_rows, write_error_csv
from .msstep import (empirical_gamma_a, lyapunov_trace, reduce, run_implicit, run_split,
                     source_norms)
from .qh2 import build_qh2_aux, build_qh2_basis, stability_report

log = logging.getLogger("pecem")


class PhaseError(RuntimeError):
    def __init__(self, phase, exc):
        super().__init__(f"[{phase}] {type(exc).__name__}: {exc}")
        self.phase = phase


class Run:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.out = Path(cfg.output)
        self.timings: dict[str, float] = {}
        self.files: list[Path] = []

    @contextmanager
    def phase(self, name):
        t0 = time.perf_counter()
        try:
            yield
        except Exception as exc:
            raise PhaseError(name, exc) from exc
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t0
            log.info("%-12s %.2fs", name, self.timings[name])

    def emit(self, path):
        self.files.append(Path(path))
        return Path(path)


def build_problem(cfg: ExperimentConfig):
    gp = build_grid_pair(cfg.coarse_n, cfg.ratio)
    pc = PhysicsConstants(cfg.alpha, cfg.M, cfg.nu, cfg.nu_p)
    if cfg.raster:
        field_ = load_raster(cfg.raster, gp, cfg.nu_p)
    else:
        field_ = generate_streak_field(gp, cfg.background, cfg.contrast, cfg.seed, cfg.nu_p)
    return gp, pc, field_, assemble_forms(gp, field_, pc)


def _save_traj(path, traj: Trajectory):
    np.savez(path, steps=np.array(traj.steps), tau=traj.time.tau, N=traj.time.N,
             u=np.array(traj.u), p=np.array(traj.p))


def _load_traj(path, method) -> Trajectory:
    with np.load(path) as z:
        t = Trajectory(method, TimeGrid(float(z["tau"]), int(z["N"])))
        t.steps, t.u, t.p = list(map(int, z["steps"])), list(z["u"]), list(z["p"])
    return t


def run(cfg: ExperimentConfig) -> dict:
    """Execute every requested method and write all artifacts; returns the manifest."""
    r = Run(cfg)
    r.out.mkdir(parents=True, exist_ok=True)
    tg = TimeGrid(cfg.tau, cfg.N)
    f, p0 = cfg.source_fn, cfg.initial_fn
    with r.phase("assemble"):
        gp, pc, field_, forms = build_problem(cfg)
    need_ms = [m for m in cfg.methods if m != "fine"]
    need_q2 = any(m in ("cem_q2", "split") for m in cfg.methods)
    trajs: dict[str, Trajectory] = {}
    report = None
    if "fine" in cfg.methods or need_ms:
        with r.phase("fine"):
            trajs["fine"] = run_fine(forms, tg, f, p0, cfg.stride)
    if need_ms:
        with r.phase("spaces"), warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            aux = build_auxiliary(forms, gp, cfg.J, cfg.J, cfg.workers)
            V = build_cem_basis(forms, aux, gp, cfg.ell, "V", cfg.workers)
            Q1 = build_cem_basis(forms, aux, gp, cfg.ell, "Q", cfg.workers)
            Q2 = None
            if need_q2:
                qaux = build_qh2_aux(forms, aux, gp, cfg.J_q2, cfg.workers)
                Q2 = build_qh2_basis(forms, aux, qaux, gp, cfg.ell, cfg.workers)
                report = stability_report(forms, Q1, Q2, gp.H, cfg.tau)
            rs = reduce(forms, V, Q1, Q2)
    for m in ("cem", "cem_q2"):
        if m in cfg.methods:
            with r.phase(m):
                trajs[m] = run_implicit(rs, tg, f, p0, with_q2=(m == "cem_q2"), stride=cfg.stride)
    if "split" in cfg.methods:
        with r.phase("split"), warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            traj, states = run_split(rs, tg, f, p0, cfg.stride, report, keep_states=True)
            trajs["split"] = traj
            report.gamma_a = empirical_gamma_a(states, rs)
            lt = lyapunov_trace(states, rs, report.gamma_a, report.gamma_c, cfg.tau,
                                source_norms(rs, f, tg, cfg.M))
        path = r.emit(r.out / "lyapunov.csv")
        with open(path, "w") as fh:
            fh.write("n,E,budget,flag\n")
            for n, e in enumerate(lt.energy):
                b = lt.budget[n] if n < lt.budget.size else 0.0
                flag = int(lt.flags[n]) if n < lt.flags.size else 0
                fh.write(f"{n},{io.fmt(e)},{io.fmt(b)},{flag}\n")

    with r.phase("output"):
        if report is not None:
            io.write_json(r.emit(r.out / "stability.json"),
                          dict(json.loads(report.to_json()), coarse_n=cfg.coarse_n,
                               fine_n=gp.fine.n_x, N=cfg.N, seed=field_.seed))
        for m, traj in trajs.items():
            _save_traj(r.emit(r.out / f"traj_{m}.npz"), traj)
            u, p = traj.at(traj.steps[-1])
            io.write_snapshot(r.emit(r.out / f"snapshot_{m}_n{traj.steps[-1]}.csv"),
                              forms.dofmap, u, p)
        if need_ms:
            series = [pressure_errors(trajs[m], trajs["fine"], forms, cfg.name)
                      for m in ("cem", "cem_q2", "split") if m in trajs]
            write_error_csv(r.emit(r.out / f"errors_{cfg.name}.csv"), series)
    manifest = {
        "config": cfg.to_dict(),
        "coefficient": {"seed": field_.seed, "hash": field_.digest(),
                        "source": field_.source, "contrast": field_.contrast},
        "timings": r.timings,
        "files": {p.name: io.sha256_file(p) for p in r.files},
    }
    io.write_json(r.out / "manifest.json", manifest)
    return manifest


def report_dir(out) -> list:
    """Recompute error tables from trajectories stored by :func:`run`."""
    out = Path(out)
    manifest = json.loads((out / "manifest.json").read_text())
    cfg = ExperimentConfig.from_dict(dict(manifest["config"], output=str(out)))
    _, _, field_, forms = build_problem(cfg)
    if field_.digest() != manifest["coefficient"]["hash"]:
        raise ValueError("coefficient field does not match the stored run")
    fine = _load_traj(out / "traj_fine.npz", "fine")
    series = [pressure_errors(_load_traj(out / f"traj_{m}.npz", m), fine, forms, cfg.name)
              for m in ("cem", "cem_q2", "split") if (out / f"traj_{m}.npz").exists()]
    write_error_csv(out / f"report_{cfg.name}.csv", series)
    return series


def _print_table(series):
    last = series[0].steps[-1]
    steps = sorted({n for n in TABLE_STEPS if n <= last} | {last})
    print("n".rjust(5) + "".join(s.method.rjust(12) for s in series) + "   (energy error, %)")
    for row in table_rows(series, steps):
        print(f"{row[0]:5d}" + "".join(f"{v:12.2f}" for v in row[1:]))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="pecem", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)
    pr = sub.add_parser("run", help="run an experiment")
    src = pr.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="JSON configuration file")
    src.add_argument("--preset", help="example1_f1, example1_f2, example2, example3, desk")
    pr.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    pr.add_argument("--output", help="output directory (overrides config)")
    rp = sub.add_parser("report", help="re-derive error tables from a run directory")
    rp.add_argument("--dir", required=True)
    sub.add_parser("schema", help="print the configuration JSON schema")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        if args.cmd == "schema":
            print(json.dumps(CONFIG_SCHEMA, indent=2))
            return 0
        if args.cmd == "report":
            series = report_dir(args.dir)
            _print_table(series)
            return 0
        cfg = ExperimentConfig.from_json(args.config) if args.config else preset(args.preset)
        if args.output:
            args.override.append(f"output={json.dumps(args.output)}")
        cfg = cfg.override(args.override)
        manifest = run(cfg)
        if any(m != "fine" for m in cfg.methods):
            _print_table(list(read_error_csv(Path(cfg.output) / f"errors_{cfg.name}.csv").values()))
        print(f"wrote {len(manifest['files'])} files to {cfg.output}")
        return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (PhaseError, KeyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
