from pathlib import Path
from typing import Union

from ascii_colors import ASCIIColors

nmpec_path = Path(__file__).parent
nmpec_default_cfg_path = nmpec_path / "configs/config.yaml"


class RunPaths:
    """Output layout of one experiment.

    <out>/
        manifest.json
        observables/<label>.csv
        bounds.csv
        sweep.csv
        plans.json
        reference/states.csv, reference/gamma_spectrum.csv
    """

    def __init__(self, out_dir: Union[str, Path], create: bool = True, verbose: bool = False):
        self.out_dir            = Path(out_dir).resolve()
        self.manifest_path      = self.out_dir / "manifest.json"
        self.observables_path   = self.out_dir / "observables"
        self.bounds_path        = self.out_dir / "bounds.csv"
        self.sweep_path         = self.out_dir / "sweep.csv"
        self.plans_path         = self.out_dir / "plans.json"
        self.reference_path     = self.out_dir / "reference"
        self.states_path        = self.reference_path / "states.csv"
        self.spectrum_path      = self.reference_path / "gamma_spectrum.csv"
        if verbose:
            ASCIIColors.green("----------------------Output paths-----------------------")
            ASCIIColors.red("out_dir:", end="")
            ASCIIColors.yellow(f"{self.out_dir}")
            ASCIIColors.red("observables_path:", end="")
            ASCIIColors.yellow(f"{self.observables_path}")
            ASCIIColors.red("reference_path:", end="")
            ASCIIColors.yellow(f"{self.reference_path}")
            ASCIIColors.green("----------------------------------------------------------")
        if create:
            self.create_directories()

    def __str__(self) -> str:
        directories = {
            "Output Path": self.out_dir,
            "Manifest": self.manifest_path,
            "Observables Path": self.observables_path,
            "Reference Path": self.reference_path,
        }
        return "\n".join([f"{category}: {path}" for category, path in directories.items()])

    def create_directories(self):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.observables_path.mkdir(parents=True, exist_ok=True)
