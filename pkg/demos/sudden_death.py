"""Sudden death a priori, smooth decay a posteriori.

Start both qubits in (|10> + i|01>)/sqrt(2). Without reading the bath, the
concurrence of the averaged state hits zero at t_D = -ln(sqrt(2) - 1)/gamma and
stays there. Reading the bath by photon counting keeps each path maximally
entangled for all times.

Run with ``python demos/sudden_death.py``.
"""

import math

import numpy as np

from monitored_entanglement import analytics, presets
from monitored_entanglement.engine import ensemble_run, evolve_master
from monitored_entanglement.entanglement import concurrence_mixed
from monitored_entanglement.qcore import projector

T, DT = 2.0, 1e-3
psi0 = presets.esd_initial_state()
p = presets.local_jump(gamma=1.0)

path = evolve_master(p.model, projector(psi0), T, DT)
t_d = analytics.apriori_esd_time(p.model, projector(psi0), T, DT, path=path)
print(f"a priori death time t_D = {t_d:.10f}  (closed form {-math.log(math.sqrt(2) - 1):.10f})")

est = ensemble_run(p.model, psi0, T, DT, 500, seed=3, observable="concurrence", record_every=200)
print(f"{'t':>5} {'a priori C':>11} {'closed form':>12} {'mean a posteriori C':>20}")
for t, c in zip(est.times, est.mean):
    n = int(round(t / DT))
    closed = max(0.0, float(analytics.esd_apriori_curve(1.0, t)))
    print(f"{t:5.2f} {concurrence_mixed(path.states[n]):11.6f} {closed:12.6f} {c:20.6f}")
