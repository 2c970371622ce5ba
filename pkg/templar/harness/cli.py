# BSD 3-Clause License
#
# Copyright (c) 2025-Present, templar developers
# All rights reserved.
#
# Redistribution and use in source and binary forms, with or without
# modification, are permitted provided that the following conditions are met:
#
# * Redistributions of source code must retain the above copyright notice, this
#   list of conditions and the following disclaimer.
#
# * Redistributions in binary form must reproduce the above copyright notice,
#   this list of conditions and the following disclaimer in the documentation
#   and/or other materials provided with the distribution.
#
# * Neither the name of the copyright holder nor the names of its
#   contributors may be used to endorse or promote products derived from
#   this software without specific prior written permission.
#
# THIS SOFTWARE IS PROVIDED BY THE COPYRIGHT HOLDERS AND CONTRIBUTORS "AS IS"
# AND ANY EXPRESS OR IMPLIED WARRANTIES, INCLUDING, BUT NOT LIMITED TO, THE
# IMPLIED WARRANTIES OF MERCHANTABILITY AND FITNESS FOR A PARTICULAR PURPOSE ARE
# DISCLAIMED. IN NO EVENT SHALL THE COPYRIGHT HOLDER OR CONTRIBUTORS BE LIABLE
# FOR ANY DIRECT, INDIRECT, INCIDENTAL, SPECIAL, EXEMPLARY, OR CONSEQUENTIAL
# DAMAGES (INCLUDING, BUT NOT LIMITED TO, PROCUREMENT OF SUBSTITUTE GOODS OR
# SERVICES; LOSS OF USE, DATA, OR PROFITS; OR BUSINESS INTERRUPTION) HOWEVER
# CAUSED AND ON ANY THEORY OF LIABILITY, WHETHER IN CONTRACT, STRICT LIABILITY,
# OR TORT (INCLUDING NEGLIGENCE OR OTHERWISE) ARISING IN ANY WAY OUT OF THE USE
# OF THIS SOFTWARE, EVEN IF ADVISED OF THE POSSIBILITY OF SUCH DAMAGE.
"""The `templar` command line.

```
templar config --profile desk --out config.json
templar gen-data --config config.json
templar calibrate --config config.json
templar attack --identity id0003 --fold 1 --technique SGADV
templar bench --config config.json --workers 4
templar sweep --config config.json --epsilon 0.01 --epsilon 0.1
templar report --results results/results.json
```

Exit status is 0 on success, 1 on any error and 2 when `bench` or `sweep`
finished but found invariant violations.
"""

from __future__ import annotations

__all__ = ("main", "build_parser")

import argparse
import dataclasses
import logging
import pathlib
import sys
import typing

from sain import Err
from sain import Ok

from templar import authsys
from templar import data
from templar import embedding
from templar.attacks import Technique
from templar.harness import config as _config
from templar.harness import report
from templar.harness import scenario as _scenario

if typing.TYPE_CHECKING:
    import collections.abc as collections

    from sain import Result

    from templar import error

_LOGGER = logging.getLogger("templar")
_Handler: typing.TypeAlias = "collections.Callable[[argparse.Namespace, _config.ExperimentConfig], int]"
_DEFAULT_CONFIG: typing.Final = "config.json"

EXIT_OK: typing.Final = 0
EXIT_ERROR: typing.Final = 1
EXIT_VIOLATIONS: typing.Final = 2


def _fail(why: error.TemplarError) -> int:
    _LOGGER.error("%s", why.message)
    if description := why.description():
        _LOGGER.debug("%s", description)
    return EXIT_ERROR


def _load_config(
    args: argparse.Namespace,
) -> Result[_config.ExperimentConfig, error.ConfigError]:
    path: str | None = args.config
    if path is None:
        if not pathlib.Path(_DEFAULT_CONFIG).is_file():
            _LOGGER.info("no %s found, using the desk profile", _DEFAULT_CONFIG)
            return Ok(_config.ExperimentConfig.default())
        path = _DEFAULT_CONFIG
    return _config.load_config(path)


def _output(args: argparse.Namespace, cfg: _config.ExperimentConfig) -> pathlib.Path:
    return pathlib.Path(args.out if args.out is not None else cfg.output_dir)


def _cmd_config(args: argparse.Namespace) -> int:
    match _config.profile(args.profile):
        case Ok(cfg):
            pass
        case Err(why):
            return _fail(why)

    match _config.write_config(cfg, args.out or _DEFAULT_CONFIG):
        case Ok(path):
            _LOGGER.info("wrote the %s profile to %s", args.profile, path)
            return EXIT_OK
        case Err(why):
            return _fail(why)


def _cmd_gen_data(args: argparse.Namespace, cfg: _config.ExperimentConfig) -> int:
    root = _output(args, cfg)
    gallery = cfg.dataset
    dataset = data.generate_dataset(
        gallery.n_identities,
        gallery.samples_per_identity,
        gallery.dims,
        gallery.intra_noise_sigma,
        gallery.seed,
    )
    if (saved := data.save_dataset(dataset, root / "dataset")).is_err():
        return _fail(saved.unwrap_err())

    if gallery.source_identities > 0:
        pool = data.generate_source_pool(
            gallery.source_identities,
            gallery.samples_per_identity,
            gallery.dims,
            gallery.intra_noise_sigma,
            _scenario.derive_seed(gallery.seed, "sources", 0, "pool"),
        )
        if (saved := data.save_dataset(pool, root / "sources")).is_err():
            return _fail(saved.unwrap_err())

    for verifier in cfg.embedders:
        model = embedding.make_reference_embedder(gallery.dims, verifier.feature_dim, verifier.seed)
        match embedding.save_model(model, root / f"model_{verifier.name}.bin"):
            case Ok(path):
                _LOGGER.info("wrote the %s model to %s", verifier.name, path)
            case Err(why):
                return _fail(why)
    return EXIT_OK


def _cmd_calibrate(args: argparse.Namespace, cfg: _config.ExperimentConfig) -> int:
    root = _output(args, cfg)
    for verifier in cfg.embedders:
        experiment = _scenario.Experiment.build(cfg, verifier)
        points = authsys.roc(experiment.scores)
        _LOGGER.info("%s: auc=%.4f", verifier.name, authsys.auc(points))
        match authsys.save_system(experiment.system, root / f"system_{verifier.name}.json"):
            case Ok(path):
                _LOGGER.info("wrote the calibrated system to %s", path)
            case Err(why):
                return _fail(why)
        print(f"{verifier.name}\ttau={experiment.tau!r}\teer={experiment.eer!r}")
    return EXIT_OK


def _pick_model(
    cfg: _config.ExperimentConfig, name: str | None
) -> _config.EmbedderConfig | None:
    if name is None:
        return cfg.embedder
    return next((e for e in cfg.embedders if e.name == name), None)


def _cmd_attack(args: argparse.Namespace, cfg: _config.ExperimentConfig) -> int:
    technique = Technique(args.technique)
    if technique not in cfg.techniques:
        defaults = _config.ExperimentConfig.default().techniques
        cfg = dataclasses.replace(
            cfg, techniques={**cfg.techniques, technique: defaults[technique]}
        )

    if (verifier := _pick_model(cfg, args.model)) is None:
        _LOGGER.error("unknown model %r", args.model)
        return EXIT_ERROR

    experiment = _scenario.Experiment.build(cfg, verifier)
    if experiment.dataset.identity(args.identity).is_none():
        _LOGGER.error("unknown identity %r", args.identity)
        return EXIT_ERROR
    if not 0 <= args.fold < experiment.dataset.samples_per_identity:
        _LOGGER.error("fold %d is out of range", args.fold)
        return EXIT_ERROR

    key = _scenario.AttackKey(technique, args.identity, args.fold)
    record = experiment.attack([key])[key]
    result = record.result
    print(f"# {key.label()} model={verifier.name} source={record.source_key} seed={record.seed}")
    for step, (loss, dissim) in enumerate(zip(result.loss_trace, result.dissimilarity_trace)):
        print(f"{step}\t{loss!r}\t{dissim!r}")
    print(
        f"# stop={result.stop_reason.value} steps={result.steps_taken} tau={experiment.tau!r}"
    )

    if args.out is not None:
        if (written := report.write_trace(result, args.out)).is_err():
            return _fail(written.unwrap_err())
    return EXIT_OK


def _violated(violations: collections.Sequence[error.InvariantViolation]) -> int:
    if not violations:
        return EXIT_OK
    for violation in violations:
        _LOGGER.warning("%s", violation.message)
    _LOGGER.error("%d invariant violation(s)", len(violations))
    return EXIT_VIOLATIONS


def _with_workers(args: argparse.Namespace, cfg: _config.ExperimentConfig) -> _config.ExperimentConfig:
    if args.workers is not None:
        return dataclasses.replace(cfg, workers=args.workers)
    return cfg


def _cmd_bench(args: argparse.Namespace, cfg: _config.ExperimentConfig) -> int:
    cfg = _with_workers(args, cfg)
    scenarios = (
        tuple(_config.Scenario(s) for s in args.scenario) if args.scenario else cfg.scenarios
    )

    benches = _scenario.run_models(cfg, scenarios)
    if (written := report.write_report(benches, _output(args, cfg))).is_err():
        return _fail(written.unwrap_err())

    for bench in benches:
        for result in bench.scenarios:
            for technique in result.techniques:
                print(
                    f"{bench.model}\t{result.scenario.value}\t{technique.value}"
                    f"\tasr={result.asr(technique):.4f}"
                )
    return _violated([v for bench in benches for v in bench.violations])


def _cmd_sweep(args: argparse.Namespace, cfg: _config.ExperimentConfig) -> int:
    cfg = _with_workers(args, cfg)
    epsilons = tuple(args.epsilon) if args.epsilon else cfg.sweep_epsilons
    if not all(0.0 < e <= 1.0 for e in epsilons):
        _LOGGER.error("sweep budgets must lie in (0, 1]")
        return EXIT_ERROR

    rows: list[_scenario.SweepRow] = []
    violations: list[error.InvariantViolation] = []
    for verifier in cfg.embedders:
        sweep = _scenario.run_epsilon_sweep(
            _scenario.Experiment.build(cfg, verifier), epsilons, _config.Scenario(args.scenario)
        )
        rows.extend(sweep.rows)
        violations.extend(sweep.violations)

    combined = _scenario.SweepResult(tuple(rows), tuple(violations))
    if (written := report.write_sweep(combined, _output(args, cfg) / "epsilon_sweep.csv")).is_err():
        return _fail(written.unwrap_err())

    for row in combined.rows:
        print(f"{row.model}\t{row.technique.value}\teps={row.epsilon:g}\tasr={row.asr:.4f}\tssim={row.ssim:.4f}")
    return _violated(violations)


def _cmd_report(args: argparse.Namespace) -> int:
    source = pathlib.Path(args.results)
    match report.load_results(source):
        case Ok(benches):
            pass
        case Err(why):
            return _fail(why)

    if (written := report.write_report(benches, args.out or source.parent)).is_err():
        return _fail(written.unwrap_err())
    return EXIT_VIOLATIONS if any(bench.violations for bench in benches) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="templar",
        description="Template-level adversarial attacks on a simulated embedding verifier.",
    )
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=("DEBUG", "INFO", "WARNING", "ERROR"),
        help="logging verbosity (default: %(default)s)",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    def with_config(name: str, summary: str) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, help=summary)
        sub.add_argument(
            "--config", default=None, help=f"config file (default: ./{_DEFAULT_CONFIG} or desk)"
        )
        sub.add_argument("--out", default=None, help="output directory (default: the config's)")
        return sub

    cfg = commands.add_parser("config", help="write a profile as a config file")
    cfg.add_argument("--profile", default="desk", choices=_config.PROFILES)
    cfg.add_argument("--out", default=None, help=f"destination (default: ./{_DEFAULT_CONFIG})")

    with_config("gen-data", "write the gallery and the reference models")
    with_config("calibrate", "calibrate every verifier threshold at its equal error rate")

    attack = with_config("attack", "run a single attack and print its trace")
    attack.add_argument("--identity", required=True)
    attack.add_argument("--fold", type=int, default=0)
    attack.add_argument(
        "--technique", default=Technique.SGADV.value, choices=[t.value for t in Technique]
    )
    attack.add_argument("--model", default=None, help="embedder name (default: the first)")

    bench = with_config("bench", "run the scenarios and write every report")
    bench.add_argument("--workers", type=int, default=None)
    bench.add_argument("--scenario", action="append", choices=[s.value for s in _config.Scenario])

    sweep = with_config("sweep", "rerun every technique over a range of budgets")
    sweep.add_argument("--workers", type=int, default=None)
    sweep.add_argument(
        "--epsilon", type=float, action="append", help="budget, repeatable (default: the config's)"
    )
    sweep.add_argument(
        "--scenario", default=_config.Scenario.S1.value, choices=[s.value for s in _config.Scenario]
    )

    rendered = commands.add_parser("report", help="re-render reports from a results file")
    rendered.add_argument("--results", default="results/results.json")
    rendered.add_argument(
        "--out", default=None, help="output directory (default: next to the results)"
    )
    return parser


def main(argv: collections.Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )

    if args.command == "config":
        return _cmd_config(args)
    if args.command == "report":
        return _cmd_report(args)

    match _load_config(args):
        case Ok(cfg):
            pass
        case Err(why):
            return _fail(why)

    handlers: dict[str, _Handler] = {
        "gen-data": _cmd_gen_data,
        "calibrate": _cmd_calibrate,
        "attack": _cmd_attack,
        "bench": _cmd_bench,
        "sweep": _cmd_sweep,
    }
    try:
        return handlers[args.command](args, cfg)
    except ValueError as exc:
        _LOGGER.error("%s", exc)
        return EXIT_ERROR
