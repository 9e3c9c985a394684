"""Kill the middle relay of a formed five-robot chain and watch it heal."""

from swarmlink.scenarios import repair_scenario

for seed in range(5):
    out = repair_scenario(seed)
    print(
        f"seed {seed}: restored after {out.restored_step} steps, "
        f"gap {out.gap_before:.2f} m -> {out.gap_after:.2f} m, "
        f"ends moved {out.moved[0]:.2f} m and {out.moved[1]:.2f} m"
    )
