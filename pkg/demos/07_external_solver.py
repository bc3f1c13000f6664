# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# %% [markdown]
# # Driving an external solver
#
# Real studies replace the built-in proxy with a simulation code.  The
# adapter writes a `params.csv` request, invokes the solver command with the
# request and response paths, and parses `qoi.csv` back.  This demo fakes a
# solver with a short Python script so the round trip can be inspected.

# %%
import stat
import sys
import tempfile
from pathlib import Path

import numpy as np

from sguq import ExternalModel, register_builtin

workdir = Path(tempfile.mkdtemp(prefix="sguq_external_"))

# %% [markdown]
# ## A stand-in solver executable
#
# Any command works as long as it reads the request CSV (header of input
# names, one row per sample) and writes the response CSV (header of output
# names, one row per input row) before exiting with code 0.

# %%
solver = workdir / "solver.py"
solver.write_text(f"""#!{sys.executable}
import csv, sys
import numpy as np
from sguq.models import beam_proxy, register_builtin

with open(sys.argv[1]) as fh:
    reader = csv.reader(fh)
    next(reader)
    rows = np.array([[float(x) for x in row] for row in reader])
out = beam_proxy(rows)
with open(sys.argv[2], "w", newline="") as fh:
    writer = csv.writer(fh)
    writer.writerow(register_builtin("beam_proxy").output_names)
    for row in out:
        writer.writerow([f"{{v:.17g}}" for v in row])
""")
solver.chmod(solver.stat().st_mode | stat.S_IEXEC)

# %% [markdown]
# ## Round trip

# %%
builtin = register_builtin("beam_proxy")
external = ExternalModel(
    command=[sys.executable, str(solver)],
    workdir=workdir / "exchange",
    input_names=builtin.input_names,
    output_names=builtin.output_names,
    timeout=120.0,
)
batch = np.array([[1339.8, -3.75], [1200.0, -1.0], [1450.0, 0.0]])
via_files = external.evaluate(batch)
direct = builtin.evaluate(batch)
print("bit-identical to the in-process model:", np.array_equal(via_files, direct))

# %%
print("request file written by the adapter:")
print((workdir / "exchange" / "params.csv").read_text())

# %% [markdown]
# In a JSON config for the `sguq` command line the same solver would appear
# as:
#
# ```json
# "model": {
#   "command": ["python3", "solver.py"],
#   "workdir": "exchange",
#   "inputs": ["T_A", "log_h_p"],
#   "outputs": ["u_1", "..."],
#   "timeout": 3600
# }
# ```
