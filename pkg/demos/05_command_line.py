"""The batch front end, driven from Python: simulate, extract, unmix, evaluate, map.

The same steps run from a shell as ``hsibundles <command> ...``.
"""
import tempfile
from pathlib import Path

from hsibundles import cli

root = Path(tempfile.mkdtemp(prefix="hsibundles-demo-"))
scene, bundles, out = root / "scene", root / "bundles", root / "unmix"
steps = [
    ["simulate", "--seed", "5", "--out", str(scene), "--set", "width=20", "--set", "height=20",
     "--set", "bands=50", "--set", "materials=3", "--set", "variants=3"],
    ["extract", "--seed", "5", "--out", str(bundles), "--set", f"image={scene / 'image.bin'}",
     "--set", "materials=3", "--set", "subset_fraction=0.2"],
    ["unmix", "--out", str(out), "--penalty", "fractional", "--lambda", "0.1",
     "--set", f"image={scene / 'image.bin'}", "--set", f"dictionary={bundles / 'dictionary.bin'}",
     "--set", f"groups={bundles / 'groups.txt'}"],
    ["eval", "--out", str(out), "--set", f"image={scene / 'image.bin'}",
     "--set", f"dictionary={bundles / 'dictionary.bin'}", "--set", f"groups={bundles / 'groups.txt'}",
     "--set", f"abundances={out / 'abundances_atom.bin'}", "--set", f"truth={scene / 'truth_atom.bin'}",
     "--set", f"truth_dictionary={scene / 'dictionary.bin'}",
     "--set", f"truth_groups={scene / 'groups.txt'}"],
    ["report", "--out", str(out / "maps"), "--set", f"abundances={out / 'abundances.bin'}",
     "--set", f"layout={scene / 'spec.txt'}"],
]
for argv in steps:
    code = cli.main(argv)
    print(f"{argv[0]:>8} -> exit {code}")

print((out / "metrics.txt").read_text())
print((out / "maps" / "summary.txt").read_text())
print("outputs under", root)
