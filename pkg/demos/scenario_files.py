"""
Writing and reading scenario files
==================================

Scenarios are INI files.  Any builtin can be dumped, edited and loaded back.
"""

import tempfile
from pathlib import Path

from sepctrl.scenarios import load_scenario, save_scenario, scenario_hash, serialize_scenario

text = serialize_scenario(load_scenario("toy"))
print(text)

# raise the penalty weight and reload
edited = text.replace("beta = 0.5", "beta = 1.0")
path = Path(tempfile.mkdtemp()) / "toy_beta1.ini"
path.write_text(edited)
s = load_scenario(path)
print("beta:", s.beta, "hash:", scenario_hash(s))

save_scenario(load_scenario("lqg"), path.with_name("lqg.ini"))
print(path.with_name("lqg.ini").read_text())
