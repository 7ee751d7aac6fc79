"""Command-line interface: sample, learn, active, eval.

Exit codes: 0 success, 1 usage, 2 unreadable or malformed input data,
3 numerical failure (nothing learnable / zero likelihood).  Every run is
deterministic in its --seed (default from MDPLEARN_SEED, else 0) and writes
its fully resolved configuration next to its outputs.
"""

import argparse
import json
import os
import sys
from dataclasses import asdict

import numpy as np

from . import report as report_mod
from .active import (
    BALANCED,
    UNIFORM,
    ActiveSchedule,
    active_learn,
)
from .builtin import grid_world_model, random_model, reber_model, street_crossing_model
from .em import (
    SKIP,
    SMOOTH,
    AllSequencesSkippedError,
    EmConfig,
    mc_bw,
    mdp_bw,
)
from .evaluate import (
    MetricsRow,
    bounded_reachability,
    bounded_until,
    kl_estimate,
    mean_log_likelihood,
)
from .inference import ZeroLikelihoodError
from .models import (
    Dataset,
    DatasetParseError,
    Model,
    UniformScheduler,
    VocabularyError,
    read_dataset,
    read_model,
    write_dataset,
    write_model,
)
from .sim import LengthSampler, ProtocolError, ReplaySystem, passive_sample, simulate

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

SEED_ENV_VAR = "MDPLEARN_SEED"


class CliDataError(Exception):
    """Input files that cannot be read or parsed."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    return int(os.environ.get(SEED_ENV_VAR, "0"))


def _load_dataset(path: str) -> Dataset:
    try:
        return read_dataset(path)
    except OSError as exc:
        raise CliDataError(f"cannot read dataset {path!r}: {exc}") from exc


def _load_model_file(path: str) -> Model:
    try:
        return read_model(path)
    except OSError as exc:
        raise CliDataError(f"cannot read model {path!r}: {exc}") from exc
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CliDataError(f"malformed model file {path!r}: {exc}") from exc


def _resolve_model_ref(ref: str) -> Model:
    """Builtin refs: reber, street[:p=V], grid:FILE; anything else is a path."""
    if ref == "reber":
        return reber_model()
    if ref == "street" or ref.startswith("street:"):
        p = 0.75
        if ref != "street":
            spec = ref.split(":", 1)[1]
            if not spec.startswith("p="):
                raise _UsageError(f"street ref takes p=VALUE, got {ref!r}")
            try:
                p = float(spec[2:])
            except ValueError:
                raise _UsageError(f"invalid street parameter in {ref!r}") from None
        return street_crossing_model(p)
    if ref.startswith("grid:"):
        return _load_grid(ref.split(":", 1)[1])
    return _load_model_file(ref)


def _load_grid(path: str) -> Model:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise CliDataError(f"cannot read grid spec {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliDataError(f"malformed grid spec {path!r}: {exc}") from exc
    try:
        return grid_world_model(
            layout=doc["layout"],
            slip=doc["slip"],
            initial=tuple(doc["initial"]),
            label_names=doc.get("labels"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CliDataError(f"invalid grid spec {path!r}: {exc}") from exc


class _UsageError(Exception):
    pass


def _parse_length_spec(spec: str) -> LengthSampler:
    """fixed:T | geo:P | shifted-geo:OFFSET:P"""
    parts = spec.split(":")
    try:
        if parts[0] == "fixed" and len(parts) == 2:
            return LengthSampler.fixed(int(parts[1]))
        if parts[0] == "geo" and len(parts) == 2:
            return LengthSampler.geometric(float(parts[1]))
        if parts[0] == "shifted-geo" and len(parts) == 3:
            return LengthSampler.shifted_geometric(int(parts[1]), float(parts[2]))
    except ValueError as exc:
        raise _UsageError(f"invalid length spec {spec!r}: {exc}") from None
    raise _UsageError(
        f"invalid length spec {spec!r}; expected fixed:T, geo:P or shifted-geo:OFFSET:P"
    )


def _vocab_from_dataset(dataset: Dataset) -> tuple[list[str], list[str]]:
    labels: set[str] = set()
    actions: set[str] = set()
    for obs, _ in dataset:
        labels.update(obs.labels)
        actions.update(obs.actions)
    return sorted(labels), sorted(actions)


def _resolve_init(
    spec: str,
    dataset: Dataset,
    seed_seq: np.random.SeedSequence,
    mc: bool,
    vocabulary: tuple | None = None,
) -> Model:
    """random:N draws a random hypothesis; anything else is a model file.

    The hypothesis vocabulary comes from ``vocabulary`` (alphabet, actions)
    when the system interface is known, else from the dataset's tokens.
    """
    if spec.startswith("random:"):
        try:
            n = int(spec.split(":", 1)[1])
        except ValueError:
            raise _UsageError(f"invalid init spec {spec!r}") from None
        if n < 1:
            raise _UsageError(f"init state count must be >= 1, got {n}")
        if vocabulary is not None:
            labels, actions = vocabulary
        else:
            labels, actions = _vocab_from_dataset(dataset)
            if not actions:
                if mc:
                    actions = ["next"]
                else:
                    raise _UsageError(
                        "dataset carries no action tokens; use --mc for chain learning"
                    )
        init_seed = int(seed_seq.generate_state(1)[0])
        return random_model(n, labels, actions, init_seed)
    return _load_model_file(spec)


def _em_config(args) -> EmConfig:
    try:
        return EmConfig(
            epsilon=args.epsilon,
            max_iterations=args.max_iters,
            zero_likelihood_policy=args.policy,
            floor=args.floor,
        )
    except ValueError as exc:
        raise _UsageError(str(exc)) from None


def _write_config(path_prefix: str, payload: dict) -> None:
    with open(path_prefix + ".config.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _add_em_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--epsilon", type=float, default=0.01,
                        help="minimum total log-likelihood gain to continue (nats)")
    parser.add_argument("--max-iters", type=int, default=300)
    parser.add_argument("--policy", choices=[SKIP, SMOOTH], default=SKIP,
                        help="zero-likelihood sequence handling")
    parser.add_argument("--floor", type=float, default=1e-6,
                        help="uniform mixing mass for the smooth policy")


def cmd_sample(args) -> int:
    seed = _resolve_seed(args.seed)
    model = _resolve_model_ref(args.model)
    sampler = _parse_length_spec(args.len)
    if args.count < 1:
        raise _UsageError(f"--count must be >= 1, got {args.count}")
    system_seed, draw_seed = np.random.SeedSequence(seed).spawn(2)
    system = simulate(model, system_seed)
    rng = np.random.default_rng(draw_seed)
    dataset = passive_sample(system, UniformScheduler(model.actions), sampler, args.count, rng)
    write_dataset(dataset, args.out)
    _write_config(args.out, {
        "command": "sample",
        "model": args.model,
        "len": args.len,
        "count": args.count,
        "seed": seed,
        "out": args.out,
    })
    print(f"wrote {dataset.num_sequences} observations ({dataset.num_unique} unique) to {args.out}")
    return EXIT_OK


def cmd_learn(args) -> int:
    seed = _resolve_seed(args.seed)
    dataset = _load_dataset(args.data)
    config = _em_config(args)
    init_seq = np.random.SeedSequence(seed)
    hyp0 = _resolve_init(args.init, dataset, init_seq, args.mc)
    model, report = (mc_bw if args.mc else mdp_bw)(dataset, hyp0, config)
    write_model(model, args.out)
    with open(args.out + ".report.json", "w") as fh:
        fh.write(report.to_json())
        fh.write("\n")
    if args.plot:
        report_mod.render_em_trace_figure(report, args.out + ".report.png")
    _write_config(args.out, {
        "command": "learn",
        "data": args.data,
        "init": args.init,
        "mc": args.mc,
        "seed": seed,
        "em": asdict(config),
        "out": args.out,
    })
    final_ll = report.log_likelihood_trace[-1]
    print(
        f"learned {model.n_states}-state model in {report.iterations} iterations; "
        f"final total log-likelihood {final_ll:.6g}, "
        f"skipped {report.skipped_sequences[-1]} sequences"
    )
    return EXIT_OK


def cmd_active(args) -> int:
    seed = _resolve_seed(args.seed)
    if args.iterations < 0:
        raise _UsageError(f"--iterations must be >= 0, got {args.iterations}")
    config = _em_config(args)
    sampler = _parse_length_spec(args.len)
    seed_len = _parse_length_spec(args.seed_len) if args.seed_len else sampler
    test_len = _parse_length_spec(args.test_len) if args.test_len else sampler
    seq = np.random.SeedSequence(seed)
    (
        data0_sys_seed, data0_rng_seed, init_seed_seq, test_sys_seed, test_rng_seed,
        active_sys_seed, active_rng_seed, base_sys_seed, base_rng_seed,
    ) = seq.spawn(9)

    truth = _resolve_model_ref(args.model) if args.model else None
    if truth is None and not args.replay:
        raise _UsageError("need --model (or --replay) to provide a system")

    if args.seed_data:
        data0 = _load_dataset(args.seed_data)
    elif args.seed_count:
        if truth is None:
            raise _UsageError("--seed-count needs --model to sample from")
        system = simulate(truth, data0_sys_seed)
        data0 = passive_sample(
            system, UniformScheduler(truth.actions), seed_len,
            args.seed_count, np.random.default_rng(data0_rng_seed),
        )
    else:
        raise _UsageError("need --seed-data FILE or --seed-count N")

    vocab = (truth.alphabet, truth.actions) if truth is not None else None
    hyp0 = _resolve_init(args.init, data0, init_seed_seq, mc=False, vocabulary=vocab)

    test_data = None
    if args.test_data:
        test_data = _load_dataset(args.test_data)
    elif args.test_count:
        if truth is None:
            raise _UsageError("--test-count needs --model to sample from")
        system = simulate(truth, test_sys_seed)
        test_data = passive_sample(
            system, UniformScheduler(truth.actions), test_len,
            args.test_count, np.random.default_rng(test_rng_seed),
        )

    def make_system(seed_seq):
        if args.replay:
            return ReplaySystem.from_dataset(_load_dataset(args.replay))
        return simulate(truth, seed_seq)

    schedule = ActiveSchedule(
        iterations=args.iterations,
        length_sampler=sampler,
        sequences_per_iteration=args.per_iteration,
    )
    result = active_learn(
        make_system(active_sys_seed), hyp0, data0, schedule, config,
        strategy=args.strategy, test_data=test_data,
        rng=np.random.default_rng(active_rng_seed), cold_start=args.cold_start,
    )
    curve = list(result.curve)
    if args.baseline:
        baseline = active_learn(
            make_system(base_sys_seed), hyp0, data0, schedule, config,
            strategy=UNIFORM, test_data=test_data,
            rng=np.random.default_rng(base_rng_seed), cold_start=args.cold_start,
        )
        curve.extend(baseline.curve)

    write_model(result.model, args.out + ".model.json")
    write_dataset(result.dataset, args.out + ".data.txt")
    report_mod.write_curve_csv(curve, args.out + ".curve.csv")
    if args.plot:
        report_mod.render_curve_figure(curve, args.out + ".curve.png")
    _write_config(args.out, {
        "command": "active",
        "model": args.model,
        "replay": args.replay,
        "init": args.init,
        "seed_data": args.seed_data,
        "seed_count": args.seed_count,
        "seed_len": args.seed_len or args.len,
        "len": args.len,
        "test_data": args.test_data,
        "test_count": args.test_count,
        "test_len": args.test_len or args.len,
        "iterations": args.iterations,
        "per_iteration": args.per_iteration,
        "strategy": args.strategy,
        "baseline": args.baseline,
        "cold_start": args.cold_start,
        "seed": seed,
        "em": asdict(config),
        "out": args.out,
    })
    final = result.curve[-1]
    print(
        f"{final.dataset_size} observations after {final.iteration} iterations; "
        f"train ll/seq {final.train_ll_per_seq:.6g}"
        + (f", test ll/seq {final.test_ll_per_seq:.6g}" if final.test_ll_per_seq is not None else "")
        + (f", {result.collapsed_traces} collapsed traces" if result.collapsed_traces else "")
    )
    return EXIT_OK


def _parse_bound(bound: str) -> tuple[int, bool]:
    if bound.startswith("<="):
        return int(bound[2:]), False
    if bound.startswith("<"):
        return int(bound[1:]), True
    raise _UsageError(f"invalid bound {bound!r}; expected <K or <=K")


def cmd_eval(args) -> int:
    models = [(ref, _resolve_model_ref(ref)) for ref in args.models]
    train = _load_dataset(args.train) if args.train else None
    test = _load_dataset(args.test) if args.test else None
    true_model = _resolve_model_ref(args.true) if args.true else None
    if args.kl and (true_model is None or test is None):
        raise _UsageError("--kl needs both --true and --test")

    pmax_queries = []
    for spec in args.pmax or []:
        parts = spec.split(":")
        if len(parts) != 3 or parts[0] != "goal":
            raise _UsageError(f"invalid --pmax {spec!r}; expected goal:LABEL:BOUND")
        horizon, strict = _parse_bound(parts[2])
        pmax_queries.append((spec, parts[1], horizon, strict))
    until_queries = []
    for spec in args.puntil or []:
        parts = spec.split(":")
        if len(parts) != 3:
            raise _UsageError(f"invalid --puntil {spec!r}; expected AVOID:GOAL:BOUND")
        horizon, strict = _parse_bound(parts[2])
        if strict:
            raise _UsageError(f"--puntil takes a <=K bound, got {parts[2]!r}")
        until_queries.append((spec, parts[0], parts[1], horizon))

    rows = []
    for ref, model in models:
        row = MetricsRow(model_id=ref)
        if train is not None:
            row.train_ll = mean_log_likelihood(model, train)
        if test is not None:
            row.test_ll = mean_log_likelihood(model, test)
        if args.kl:
            row.kl = kl_estimate(true_model, model, test)
        for spec, label, horizon, strict in pmax_queries:
            row.reachability[f"pmax {spec}"] = bounded_reachability(model, label, horizon, strict)
        for spec, avoid, goal, horizon in until_queries:
            row.reachability[f"puntil {spec}"] = bounded_until(model, avoid, goal, horizon)
        rows.append(row)

    for row in rows:
        parts = [row.model_id]
        for key, value in row.as_dict().items():
            if key != "model":
                parts.append(f"{key}={value}")
        print("  ".join(parts))
    if args.out:
        report_mod.write_metrics_csv(rows, args.out + ".metrics.csv")
        report_mod.write_metrics_json(rows, args.out + ".metrics.json")
        if args.plot:
            report_mod.render_metrics_figure(rows, args.out + ".metrics.png")
        _write_config(args.out, {
            "command": "eval",
            "models": list(args.models),
            "train": args.train,
            "test": args.test,
            "true": args.true,
            "kl": args.kl,
            "pmax": list(args.pmax or []),
            "puntil": list(args.puntil or []),
            "out": args.out,
        })
    return EXIT_OK


def _build_parser() -> _Parser:
    parser = _Parser(prog="mdplearn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sample", help="sample observation traces from a model")
    p.add_argument("--model", required=True, help="reber | street[:p=V] | grid:FILE | model.json")
    p.add_argument("--len", required=True, help="fixed:T | geo:P | shifted-geo:OFFSET:P")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-o", "--out", required=True, help="dataset file to write")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("learn",
                       help="fit a model to a dataset with Baum-Welch")
    p.add_argument("--data", required=True, help="dataset file")
    p.add_argument("--init", required=True, help="random:N | model.json")
    p.add_argument("--mc", action="store_true", help="single-action chain learning")
    p.add_argument("--seed", type=int, default=None)
    _add_em_flags(p)
    p.add_argument("--no-plot", dest="plot", action="store_false")
    p.add_argument("-o", "--out", required=True, help="model file to write")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("active",
                       help="actively grow a dataset and re-fit in a loop")
    p.add_argument("--model", default=None, help="system to sample from (builtin ref or file)")
    p.add_argument("--replay", default=None, help="serve recorded traces instead of simulating")
    p.add_argument("--init", required=True, help="random:N | model.json")
    p.add_argument("--seed-data", default=None, help="initial dataset file")
    p.add_argument("--seed-count", type=int, default=None, help="sample this many initial traces")
    p.add_argument("--seed-len", default=None, help="length spec for initial traces (default: --len)")
    p.add_argument("--len", required=True, help="length spec for new traces")
    p.add_argument("--iterations", type=int, required=True)
    p.add_argument("--per-iteration", type=int, default=1)
    p.add_argument("--strategy", choices=[BALANCED, UNIFORM], default=BALANCED)
    p.add_argument("--baseline", choices=[UNIFORM], default=None,
                   help="also run a uniform-sampling arm into the same curve")
    p.add_argument("--test-data", default=None)
    p.add_argument("--test-count", type=int, default=None)
    p.add_argument("--test-len", default=None)
    p.add_argument("--cold-start", action="store_true",
                   help="re-fit from the initial hypothesis instead of warm starting")
    p.add_argument("--seed", type=int, default=None)
    _add_em_flags(p)
    p.add_argument("--no-plot", dest="plot", action="store_false")
    p.add_argument("-o", "--out", required=True, help="output path prefix")
    p.set_defaults(func=cmd_active)

    p = sub.add_parser("eval",
                       help="score models on datasets and reachability queries")
    p.add_argument("models", nargs="+", help="model refs or files")
    p.add_argument("--train", default=None, help="dataset for train log-likelihood")
    p.add_argument("--test", default=None, help="dataset for test log-likelihood")
    p.add_argument("--true", default=None, help="reference model for --kl")
    p.add_argument("--kl", action="store_true")
    p.add_argument("--pmax", action="append", help="goal:LABEL:BOUND with BOUND <K or <=K")
    p.add_argument("--puntil", action="append", help="AVOID:GOAL:<=K")
    p.add_argument("--no-plot", dest="plot", action="store_false")
    p.add_argument("-o", "--out", default=None, help="output path prefix")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"mdplearn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CliDataError, DatasetParseError, VocabularyError, ProtocolError) as exc:
        print(f"mdplearn: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (AllSequencesSkippedError, ZeroLikelihoodError, FloatingPointError) as exc:
        print(f"mdplearn: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # Remaining ValueErrors come from flag values the library rejected.
        print(f"mdplearn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
