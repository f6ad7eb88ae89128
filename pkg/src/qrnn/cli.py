"""Command-line interface: ``qrnn generate | train | predict | evaluate``.

Exit codes: 0 success, 1 usage error, 2 data or schema error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional

import numpy as np

from .dynamics import InvalidStateError, SingularPointError, is_density, sample_random_states
from .experiments import (
    Dataset,
    ExperimentConfig,
    TrainingDivergedError,
    dataset_seeds,
    evaluate,
    generate_dataset,
    train,
)
from .linalg import SIGMA_Z
from .neural import AdamState, init_params
from .qrn import DegenerateOutputError, decode_complex, rollout_master_equation, rollout_state_predictor
from .storage import (
    Checkpoint,
    SchemaError,
    atomic_write_text,
    check_compatible,
    dataset_header,
    read_checkpoint,
    read_dataset,
    write_checkpoint,
    write_dataset,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("qrnn")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _omega_range(text: str) -> tuple:
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected LO:HI, e.g. 0.5:1.5")
    if not lo <= hi:
        raise argparse.ArgumentTypeError("omega range must have LO <= HI")
    return lo, hi


def _hidden(text: str) -> tuple:
    try:
        sizes = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated layer sizes, e.g. 40,40")
    if not sizes or min(sizes) <= 0:
        raise argparse.ArgumentTypeError("layer sizes must be positive")
    return sizes


def _add_common(p: argparse.ArgumentParser, exp_required: bool = False) -> None:
    p.add_argument("--exp", type=int, choices=range(1, 6), required=exp_required,
                   help="experiment 1..5")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output file (stdout for evaluate when omitted)")
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--t-max", type=float, default=0.7, help="training horizon")
    p.add_argument("--t-eval", type=float, default=1.0, help="evaluation horizon")
    p.add_argument("--mu", type=int, default=None, help="number of Lindblad operators (default 1; 2 for EXP5)")
    p.add_argument("--lamb-shift", action="store_true", help="learn a Lamb-shift Hamiltonian too")
    p.add_argument("--omega-range", type=_omega_range, default=(0.5, 1.5), help="EXP5 omega range LO:HI")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qrnn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="integrate ground-truth trajectories into a dataset file")
    _add_common(g, exp_required=True)
    g.add_argument("--n", type=int, default=500, help="number of trajectories")
    g.add_argument("--split", choices=("train", "test"), default="train",
                   help="train: horizon t-max, seed stream 0; test: horizon t-eval, seed stream 1")

    t = sub.add_parser("train", help="train a network on a dataset")
    _add_common(t)
    t.add_argument("--dataset", required=True)
    t.add_argument("--checkpoint", help="resume from this checkpoint")
    t.add_argument("--epochs", type=int, default=60)
    t.add_argument("--batch", type=int, default=32)
    t.add_argument("--lr", type=float, default=0.01)
    t.add_argument("--hidden", type=_hidden, default=(40, 40))
    t.add_argument("--log", help="per-epoch loss log (default: OUT.log)")

    pr = sub.add_parser("predict", help="roll a trained network out from an initial state")
    _add_common(pr)
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--rho0", default="random",
                    help="'excited', 'ground', 'random', or 8 comma-separated re/im entries")
    pr.add_argument("--n", type=int, default=1, help="number of sampled initial states for --rho0 random")
    pr.add_argument("--omega", type=float, default=None, help="omega fed to EXP5 networks")
    pr.add_argument("--steps", type=int, default=None, help="rollout length (default t-eval/dt)")

    e = sub.add_parser("evaluate", help="per-time metric table for a checkpoint on a dataset")
    _add_common(e)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--dataset", required=True)
    return parser


def _config(args, exp: int, **extra) -> ExperimentConfig:
    over = dict(dt=args.dt, t_max=args.t_max, t_eval=args.t_eval, omega_range=args.omega_range, seed=args.seed)
    if args.mu is not None:
        over["mu_count"] = args.mu
    if args.lamb_shift:
        over["include_lamb_shift"] = True
    over.update(extra)
    try:
        return ExperimentConfig.for_experiment(exp, **over)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# ----------------------------------------------------------------------------
# commands


def cmd_generate(args) -> int:
    if args.n <= 0:
        raise UsageError("--n must be positive")
    cfg = _config(args, args.exp)
    train_seed, test_seed, _ = dataset_seeds(args.seed)
    if args.split == "train":
        n_steps, seed = cfg.n_train_steps, train_seed
    else:
        n_steps, seed = cfg.n_eval_steps, test_seed
    data = generate_dataset(cfg, args.n, n_steps, seed)
    ok = sum(is_density(data.states[k]) for k in range(len(data)))
    print(f"generated {len(data)} trajectories of {n_steps} steps (EXP{cfg.exp}); "
          f"invariant checks passed {ok}/{len(data)}")
    if ok != len(data):
        print("refusing to write a dataset with invalid states", file=sys.stderr)
        return EXIT_NUMERIC
    header = dataset_header(cfg, data, args.seed)
    header["split"] = args.split
    _require_out(args)
    write_dataset(args.out, data, header)
    return EXIT_OK


def _require_out(args) -> None:
    if not args.out:
        raise UsageError("--out is required")


def cmd_train(args) -> int:
    _require_out(args)
    data, header = read_dataset(args.dataset)
    if args.checkpoint:
        ckpt = read_checkpoint(args.checkpoint)
        cfg = ckpt.config
        if args.exp is not None and args.exp != cfg.exp:
            raise SchemaError(f"checkpoint is for EXP{cfg.exp}, --exp says {args.exp}")
    else:
        exp = int(header.get("exp", 0)) if args.exp is None else args.exp
        if exp not in range(1, 6):
            raise SchemaError("dataset header has no valid experiment number")
        cfg = _config(args, exp, epochs=args.epochs, batch=args.batch, lr=args.lr,
                      hidden=args.hidden, n_train=len(data))
        net = init_params(cfg.network_input_size(), cfg.network_output_size(), cfg.hidden,
                          seed=dataset_seeds(cfg.seed)[2])
        ckpt = Checkpoint(cfg, net, AdamState(lr=cfg.lr), 0)
    check_compatible(cfg, header)
    if cfg.conditioned and data.omegas is None:
        raise SchemaError("EXP5 training needs a dataset with per-trajectory omega")
    if args.epochs < 0:
        raise UsageError("--epochs must be non-negative")

    log_path = args.log or f"{args.out}.log"
    lines = ["# epoch\tmean_training_loss"]
    write_checkpoint(args.out, ckpt)
    atomic_write_text(log_path, "\n".join(lines) + "\n")

    def on_epoch(epoch, loss, result):
        lines.append(f"{epoch + 1}\t{float(loss)!r}")
        write_checkpoint(args.out, Checkpoint(cfg, result.net, result.optimizer, epoch + 1))
        atomic_write_text(log_path, "\n".join(lines) + "\n")
        if args.verbose:
            print(f"epoch {epoch + 1}: loss {loss:.6e}")

    try:
        train(cfg, data, net=ckpt.net, optimizer=ckpt.optimizer, epochs=args.epochs,
              start_epoch=ckpt.epoch, on_epoch=on_epoch)
    except TrainingDivergedError as exc:
        print(f"{exc}; last good checkpoint kept at {args.out}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"trained EXP{cfg.exp} to epoch {ckpt.epoch + args.epochs}; checkpoint {args.out}, log {log_path}")
    return EXIT_OK


def _initial_states(args) -> np.ndarray:
    spec = args.rho0.strip().lower()
    if spec == "excited":
        return np.diag([1.0, 0.0]).astype(complex)[None]
    if spec == "ground":
        return np.diag([0.0, 1.0]).astype(complex)[None]
    if spec == "random":
        if args.n <= 0:
            raise UsageError("--n must be positive")
        return sample_random_states(args.n, 2, args.seed)
    try:
        enc = np.array([float(x) for x in spec.split(",")])
        rho = decode_complex(enc, 2)
    except ValueError as exc:
        raise UsageError(f"cannot parse --rho0: {exc}") from exc
    if not is_density(rho):
        raise SchemaError("--rho0 is not a valid density matrix")
    return rho[None]


def cmd_predict(args) -> int:
    _require_out(args)
    ckpt = read_checkpoint(args.checkpoint)
    cfg = ckpt.config
    rho0 = _initial_states(args)
    n_steps = cfg.n_eval_steps if args.steps is None else args.steps
    if n_steps < 0:
        raise UsageError("--steps must be non-negative")
    omegas = None
    if cfg.conditioned:
        omega = cfg.omega if args.omega is None else args.omega
        omegas = np.full(len(rho0), omega)
    if cfg.master_equation:
        hams = None if omegas is None else omegas[:, None, None] * SIGMA_Z
        states = rollout_master_equation(rho0, ckpt.net, cfg.qrn_config(), n_steps, omegas, hams)
    else:
        states = rollout_state_predictor(rho0, ckpt.net, n_steps, omegas)
    data = Dataset(cfg.dt, np.ascontiguousarray(np.swapaxes(states, 0, 1)), omegas)
    ok = sum(is_density(data.states[k]) for k in range(len(data)))
    header = dataset_header(cfg, data, args.seed)
    header["source"] = "prediction"
    write_dataset(args.out, data, header)
    print(f"predicted {len(data)} trajectories of {n_steps} steps; valid states {ok}/{len(data)}")
    return EXIT_OK if ok == len(data) else EXIT_NUMERIC


def cmd_evaluate(args) -> int:
    ckpt = read_checkpoint(args.checkpoint)
    cfg = ckpt.config
    data, header = read_dataset(args.dataset)
    check_compatible(cfg, header)
    if cfg.conditioned and data.omegas is None:
        raise SchemaError("EXP5 evaluation needs a dataset with per-trajectory omega")
    curve = evaluate(cfg, ckpt.net, data)
    metric = "cost_J" if cfg.master_equation else "trace_distance"
    rows = [f"time\t{metric}\tn"]
    rows += [f"{float(t)!r}\t{float(v)!r}\t{curve.n}" for t, v in zip(curve.times, curve.values)]
    text = "\n".join(rows) + "\n"
    if not np.all(np.isfinite(curve.values)):
        print("non-finite metric values", file=sys.stderr)
        return EXIT_NUMERIC
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "predict": cmd_predict, "evaluate": cmd_evaluate}


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"qrnn {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SchemaError, OSError) as exc:
        print(f"qrnn {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InvalidStateError, SingularPointError, DegenerateOutputError, FloatingPointError) as exc:
        print(f"qrnn {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
