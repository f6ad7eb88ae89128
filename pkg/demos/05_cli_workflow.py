# The command-line workflow end to end, driven from Python.  The same calls
# work from a shell as `qrnn generate ...` etc.
import pathlib
import tempfile

from qrnn.cli import main

work = pathlib.Path(tempfile.mkdtemp())
train, test = work / "train.json", work / "test.json"
ckpt, metrics, pred = work / "ckpt.json", work / "metrics.tsv", work / "pred.json"

steps = [
    ["generate", "--exp", "2", "--n", "64", "--seed", "1", "--out", train],
    ["generate", "--exp", "2", "--n", "16", "--seed", "1", "--split", "test", "--out", test],
    ["train", "--dataset", train, "--epochs", "5", "--hidden", "12,12", "--seed", "1", "--out", ckpt],
    ["evaluate", "--checkpoint", ckpt, "--dataset", test, "--out", metrics],
    ["predict", "--checkpoint", ckpt, "--rho0", "excited", "--out", pred],
]
for argv in steps:
    code = main([str(a) for a in argv])
    print(f"qrnn {argv[0]:9s} -> exit {code}")

print("\nloss log:\n" + (work / "ckpt.json.log").read_text())
print("first metric rows:\n" + "".join(metrics.read_text().splitlines(True)[:4]))
print("files in", work)
