"""Unknown gap: halve a guess until Monte-Carlo rollouts certify the policy."""
# %%
import math

from pabc_lab import SimulatorAccess, policy_value, random_instance, sample_dataset
from pabc_lab.data import class_bound
from pabc_lab.online import oa_online_budget, oa_suboptimality_bound, pabc_oa

inst = random_instance(9, horizon=3, states=3, actions=3, mix=0.2, gap_floor=0.3)
H, gap = inst.mdp.horizon, inst.annotations["gap_q_star"]
n = 20_000
D = sample_dataset(inst.mdp, inst.dD, n, seed=0, compact=True)
access = SimulatorAccess(inst.mdp)
pi, tr = pabc_oa(inst.F, inst.W, D, access, delta=0.1, seed=0)

# %%
for it in tr.iterations:
    print(f"t={it.t} guess={it.gap_guess:.3f} eps={it.eps:.2f} rollouts={it.rollouts} stop={it.stop}")
C = class_bound(inst.W)
print("hidden gap", round(gap, 3), "iteration bound", math.ceil(math.log2(2 * H / gap)))
print("suboptimality", inst.annotations["v_star"] - policy_value(inst.mdp, pi).value,
      "bound", oa_suboptimality_bound(n, C, H, len(inst.F), len(inst.W), 0.1, gap))
print("online samples", tr.total_samples, "budget", oa_online_budget(n, C, H, 0.1, gap))
