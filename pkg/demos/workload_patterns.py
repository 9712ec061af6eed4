"""Print what each arrival pattern actually generates: counts per frame,
response budgets, and realized means versus the configured targets."""

from collections import Counter

from kvweaver import WorkloadSpec, generate_arrivals

FRAMES = 2000
SEED = 4


def describe(name, spec):
    arrivals = generate_arrivals(spec)
    counts = Counter()
    budgets = Counter()
    for a in arrivals:
        counts[a.frame] += 1
        budgets[a.n_tokens] += 1
    total = sum(counts.values())
    mean_rate = total / spec.num_frames
    mean_budget = (sum(b * c for b, c in budgets.items()) / total
                   if total else 0.0)
    print(f"{name}")
    print(f"  arrivals: {total}  mean per frame: {mean_rate:.4f}")
    print(f"  budgets seen: {sorted(budgets)}  mean budget: {mean_budget:.2f}")
    return mean_rate, mean_budget


def main():
    describe("OnePerFrame", WorkloadSpec(pattern="OnePerFrame",
                                         num_frames=FRAMES, seed=SEED))

    describe("Uniform (r=3)", WorkloadSpec(pattern="Uniform", r=3,
                                           num_frames=FRAMES, seed=SEED))

    rate, _ = describe("Poisson (lam=0.7)",
                       WorkloadSpec(pattern="Poisson", lam=0.7,
                                    num_frames=FRAMES, seed=SEED))
    print(f"  expected rate: 0.7000, got {rate:.4f}")

    spec = WorkloadSpec(pattern="MixedLength", short_N=10, long_N=50,
                        p_long=0.3, num_frames=FRAMES, seed=SEED)
    _, budget = describe("MixedLength (10/50, p_long=0.3)", spec)
    expected = 0.7 * 10 + 0.3 * 50
    print(f"  expected mean budget: {expected:.2f}, got {budget:.2f}")


if __name__ == "__main__":
    main()
