"""Command line front-end: ``ehl <subcommand> --config FILE --out DIR``.

Exit status: 0 on success, 1 when a computation fails, 2 for bad usage or
an invalid config.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .geometry import check_harmonicity
from .normalization import asymptote_residual, build_table
from .verify import Experiment, mass_asymptote_residual

log = logging.getLogger("ehl")

SUBCOMMANDS = ("profile", "normalize", "solve", "entropy", "lsi", "rates", "mass")
EXIT_OK, EXIT_COMPUTE, EXIT_CONFIG = 0, 1, 2


class Writer:
    """Writes files under one directory and remembers what it wrote."""

    def __init__(self, root: Path, config: RunConfig):
        self.root = root
        self.config = config
        self.written = []
        self._lock = threading.Lock()

    def _put(self, rel: str, text: str):
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        with self._lock:
            self.written.append(path)

    def csv(self, rel: str, text: str):
        if "csv" in self.config.output.formats:
            self._put(rel, text)

    def json(self, rel: str, obj):
        if "json" in self.config.output.formats:
            body = dict(obj)
            body.setdefault("config", self.config.resolved())
            self._put(rel, json.dumps(body, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")


def _csv_rows(header, rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(repr(float(v)) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# subcommands


def cmd_profile(exp: Experiment, out: Writer):
    prof = exp.profile
    dom = exp.domain
    lo = dom.boundary if dom.has_hole else 0.0
    r = np.linspace(lo, lo + 10.0, 1001)
    out.csv("profile.csv", _csv_rows(["r", "phi", "grad_phi"],
                                     zip(r, prof.phi(r), prof.grad(r))))
    info = {"domain": dom.describe(), "harmonicity_residual": check_harmonicity(prof, r[1:])}
    if dom.dimension >= 3 and dom.has_hole:
        info["cstar"] = prof.cstar
    out.json("profile.json", info)


def cmd_normalize(exp: Experiment, out: Writer):
    workers = _threads()
    table = build_table(exp.profile, exp.config.normalization_taus, workers=workers)
    out.csv("normalization.csv", table.to_csv())
    resid = [asymptote_residual(exp.profile, t) for t in exp.config.normalization_taus
             if t > 0]
    out.json("normalization.json", {"domain": exp.domain.describe(),
                                    "max_asymptote_residual": max(resid) if resid else 0.0})


def cmd_solve(exp: Experiment, out: Writer):
    from .evolve import harmonic_mass

    fields = exp.fields()
    rows = []
    for i, f in enumerate(fields):
        out.csv(f"fields/u_{i:04d}.csv", f.to_csv())
        rows.append((f.time, float(f.integrate(f.samples)), harmonic_mass(f)))
    out.csv("solution.csv", _csv_rows(["t", "mass", "harmonic_mass"], rows))
    out.json("solution.json", {"snapshots": len(fields), "m_phi": exp.m_phi()})


def cmd_entropy(exp: Experiment, out: Writer):
    out.csv("entropy.csv", exp.entropy().to_csv())
    out.json("entropy.json", {"checks": exp.entropy_checks()})


def cmd_lsi(exp: Experiment, out: Writer):
    table = exp.lsi()
    out.csv("lsi.csv", table.to_csv())
    out.json("lsi.json", {"lambda_hat_min": float(np.min(table.column("assembled_bound")))})


def cmd_rates(exp: Experiment, out: Writer):
    rep = exp.report()
    for label, series in rep.series.items():
        out.csv(f"series_{label}.csv", series.to_csv())
    out.json("report.json", rep.as_dict())


def cmd_mass(exp: Experiment, out: Writer):
    ms = exp.mass_series()
    res = mass_asymptote_residual(ms.t, ms.values, exp.profile, exp.m_phi())
    out.csv("mass.csv", _csv_rows(["t", "mass", "residual"], zip(ms.t, ms.values, res.values)))
    info = {"m_phi": exp.m_phi()}
    try:
        info["fit"] = exp.mass_fit().as_dict()
    except ValueError as exc:
        info["fit_error"] = str(exc)
    out.json("mass.json", info)


COMMANDS = {
    "profile": cmd_profile, "normalize": cmd_normalize, "solve": cmd_solve,
    "entropy": cmd_entropy, "lsi": cmd_lsi, "rates": cmd_rates, "mass": cmd_mass,
}


def _threads() -> int:
    raw = os.environ.get("EHL_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        log.warning("ignoring EHL_THREADS=%r", raw)
        return 1


def _digest(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(root: Path, files, subcommand: str, config_path: str):
    entries = []
    for p in sorted(set(files)):
        entries.append({"path": p.relative_to(root).as_posix(), "sha256": _digest(p),
                        "bytes": p.stat().st_size})
    manifest = {"created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
                "subcommand": subcommand, "config": str(config_path), "files": entries}
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n",
                                        encoding="utf-8")


def dispatch(subcommand: str, config: RunConfig, out_dir, config_path: str = "") -> int:
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    exp = Experiment(config)
    writers = []
    try:
        if subcommand == "all":
            # one writer per subcommand directory; the experiment cache is shared
            jobs = [(name, Writer(root / name, config)) for name in SUBCOMMANDS]
            writers = [w for _, w in jobs]
            with ThreadPoolExecutor(max_workers=min(_threads(), len(jobs))) as ex:
                futures = [ex.submit(COMMANDS[name], exp, w) for name, w in jobs]
                for f in futures:
                    f.result()
        else:
            w = Writer(root, config)
            writers = [w]
            COMMANDS[subcommand](exp, w)
    except Exception as exc:  # noqa: BLE001 - reported as a computation failure
        log.error("%s failed: %s", subcommand, exc)
        return EXIT_COMPUTE
    finally:
        files = [p for w in writers for p in w.written]
        write_manifest(root, files, subcommand, config_path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ehl", description=(
        "Large-time behaviour of the Dirichlet heat equation outside a hole: "
        "normalisation tables, solutions, entropy traces, LSI bounds and rate fits."))
    p.add_argument("subcommand", choices=SUBCOMMANDS + ("all",))
    p.add_argument("--config", required=True, help="INI run configuration")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--quiet", action="store_true", help="only report errors")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"ehl: config error in {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    status = dispatch(args.subcommand, config, args.out, args.config)
    if status == EXIT_OK:
        log.info("%s: wrote results to %s", args.subcommand, args.out)
    return status


if __name__ == "__main__":
    sys.exit(main())
