import json
import sys
from pathlib import Path

sys.path.append(".")

from src.engine.model import REFERENCE_ENSEMBLES, reference_config  # noqa: E402


def export_reference_configs(output_dir: str = "configs", seed: int = 0):
    """Write every shipped reference ensemble as an editable config JSON file"""
    output_path = Path(output_dir)
    output_path.mkdir(parents=True, exist_ok=True)

    for name in sorted(REFERENCE_ENSEMBLES):
        config = reference_config(name, seed)
        target = output_path / f"{name}.json"
        with open(target, "w", encoding="utf-8") as f:
            json.dump(config.model_dump(mode="json"), f, indent=2)
            f.write("\n")
        print(f"Wrote {target}")


if __name__ == "__main__":
    export_reference_configs(*sys.argv[1:2])
