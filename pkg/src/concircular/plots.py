"""Plot scripts written as text next to the run outputs; nothing is executed here.

Each script only needs numpy and matplotlib and reads the CSV files in its
own directory.
"""

from __future__ import annotations

import logging
from pathlib import Path

log = logging.getLogger(__name__)

_HEADER = '''"""{title}"""
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

HERE = Path(__file__).resolve().parent


def load(name):
    with open(HERE / name, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    return header, np.loadtxt(HERE / name, delimiter=",", skiprows=1, ndmin=2)

'''


def overlay_script(exp_id, csv_files, labels):
    body = _HEADER.format(title=f"Trajectory overlay for {exp_id}.")
    body += f"FILES = {list(csv_files)!r}\nLABELS = {list(labels)!r}\n\n"
    body += '''fig, ax = plt.subplots(figsize=(5, 5))
for name, label in zip(FILES, LABELS):
    header, data = load(name)
    i, j = header.index("gamma1"), header.index("gamma2") if "gamma2" in header else header.index("gamma1")
    ax.plot(data[:, i], data[:, j], label=label)
ax.set_aspect("equal")
ax.set_xlabel("x1")
ax.set_ylabel("x2")
ax.legend()
fig.savefig(HERE / "''' + f"{exp_id}_overlay.png" + '''", dpi=150)
'''
    return body


def reparam_script(exp_id, csv_file, dim):
    body = _HEADER.format(title=f"Circle of F against its arc length for the rescaled metric, {exp_id}.")
    body += f"FILE = {csv_file!r}\n\n"
    body += '''header, data = load(FILE)
s, s_tilde = data[:, 0], data[:, 1]
fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(10, 4.5))
if "gamma2" in header:
    ax0.plot(data[:, 2], data[:, 3], "-", label="F-circle")
    ax0.plot(data[::5, 2], data[::5, 3], "o", ms=3, label="F~-reparametrized samples")
    ax0.set_aspect("equal")
    ax0.legend()
ax1.plot(s, s_tilde)
ax1.set_xlabel("s (F arc length)")
ax1.set_ylabel("s~ (F~ arc length)")
fig.tight_layout()
fig.savefig(HERE / "''' + f"{exp_id}_reparam.png" + '''", dpi=150)
'''
    return body


def convergence_script(exp_id, csv_file, slope=4):
    body = _HEADER.format(title=f"Error against step size for {exp_id}, log-log with reference slope {slope}.")
    body += f"FILE = {csv_file!r}\nSLOPE = {slope}\n\n"
    body += '''_, data = load(FILE)
h, err = data[:, 0], data[:, 1]
fig, ax = plt.subplots(figsize=(5, 4))
ax.loglog(h, err, "o-", label="max error")
ref = err[-1] * (h / h[-1]) ** SLOPE
ax.loglog(h, ref, "--", label=f"slope {SLOPE}")
fit = np.polyfit(np.log(h), np.log(err), 1)[0]
ax.annotate(f"slope 4 reference, fitted {fit:.2f}", xy=(h[len(h) // 2], ref[len(h) // 2]),
            xytext=(10, -20), textcoords="offset points")
ax.set_xlabel("step")
ax.set_ylabel("max |gamma - reference|")
ax.legend()
fig.tight_layout()
fig.savefig(HERE / "''' + f"{exp_id}_convergence.png" + '''", dpi=150)
'''
    return body


def emit_plots(results, out_dir):
    """Write one script per plot request of the experiment results."""
    out_dir = Path(out_dir)
    written = []
    for res in results:
        for kind, payload in res.plots:
            if kind == "overlay":
                text = overlay_script(payload["id"], payload["csv"], payload["labels"])
            elif kind == "reparam":
                text = reparam_script(payload["id"], payload["csv"], payload["dim"])
            elif kind == "convergence":
                text = convergence_script(payload["id"], payload["csv"], payload.get("slope", 4))
            else:
                raise ValueError(f"unknown plot kind {kind!r}")
            path = out_dir / f"plot_{payload['id']}_{kind}.py"
            path.write_text(text, encoding="utf-8")
            written.append(path)
    if not results:
        log.warning("no plot scripts written: the experiment list is empty")
    elif not written:
        log.info("no plot scripts written: no experiment produced plottable output")
    return written
