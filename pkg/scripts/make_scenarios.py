"""Write the bundled scenario files in scenarios/ from the synthetic fixtures."""

import argparse
from pathlib import Path

from checkup_sim import fixtures
from checkup_sim.simulator import save_scenario

SCENARIOS = {
    "toy": fixtures.toy_scenario,
    "desk": fixtures.desk_scenario,
    "two_group": fixtures.two_group_scenario,
    "single_group": fixtures.single_group_scenario,
    "calibration": lambda: fixtures.calibration_scenario(size=2000),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "scenarios"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, make in SCENARIOS.items():
        sc = make()
        sc.name = name
        save_scenario(sc, out / f"{name}.json")
        print(f"{name}: {sc.init.total} individuals, budget {sc.campaign.budget}")


if __name__ == "__main__":
    main()
