"""FairBO, EI-based BO and random search on the 2-D toy with a small feasible disk.

    python3 scripts/run_toy_benchmark.py --seeds 20 --budget 50 --out runs/toy_benchmark
"""

import argparse

from fairbo import experiment


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--budget", type=int, default=50)
    p.add_argument("--initial", type=int, default=5)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="runs/toy_benchmark")
    args = p.parse_args()

    cfg = experiment.ExperimentConfig(
        dataset={"toy": {}},
        constraints=[{"metric": "DSP", "eps": 0.1, "feedback": "numeric"}],
        strategies=["fairbo", "bo", "rs"],
        budget=args.budget,
        initial=args.initial,
        seeds=list(range(args.seeds)),
        output_dir=args.out,
    )
    status = experiment.run_experiment(cfg, jobs=args.jobs)
    print(experiment.format_summary(experiment.summarize(args.out)))
    print(f"curves: {args.out}/curves.csv")
    return status


if __name__ == "__main__":
    raise SystemExit(main())
