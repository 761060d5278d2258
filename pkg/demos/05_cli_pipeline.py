"""Drive the whole CLI pipeline programmatically: synthesize a dataset,
derive surrogate-tail variants, train with 8:2 mixing, complete the test
split, evaluate, and export plot data. Everything lands in ./demo_run/.

Run: python demos/05_cli_pipeline.py
"""

from pathlib import Path

from rirforge.cli import main

root = Path("demo_run")
base = ["--preset", "desk", "--k", "1024", "--t-steps", "25", "--seed", "7"]

steps = [
    ["simulate", *base, "--out", str(root / "ism"), "--rooms", "3",
     "--sources", "1", "--receivers", "4", "--order", "1", "--target-order", "12"],
    ["surrogate-tail", *base, "--manifest", str(root / "ism" / "manifest.jsonl"),
     "--out", str(root / "surr")],
    ["train", *base, "--manifest", str(root / "ism" / "manifest.jsonl"),
     "--mix-manifest", str(root / "surr" / "manifest.jsonl"), "--mix-ratio", "8:2",
     "--out", str(root / "run"), "--epochs", "3", "--batch-size", "4"],
    ["complete", "--checkpoint", str(root / "run" / "model.ckpt"),
     "--manifest", str(root / "ism" / "manifest.jsonl"), "--split", "test",
     "--out", str(root / "preds"), "--seed", "7"],
    ["evaluate", *base, "--manifest", str(root / "ism" / "manifest.jsonl"),
     "--predictions", str(root / "preds"), "--split", "test",
     "--out", str(root / "eval"), "--k80", "512"],
]

for argv in steps:
    print(f"\n$ rirforge {' '.join(argv)}")
    code = main(argv)
    assert code == 0, f"command failed with exit code {code}"

first_test_wav = next((root / "preds").glob("*.wav"))
assert main(["plot-data", str(first_test_wav), "--out", str(root / "plots")]) == 0
print(f"\nartifacts under {root}/: dataset, surrogate variants, checkpoint, "
      "completions, metric report, plot CSVs")
