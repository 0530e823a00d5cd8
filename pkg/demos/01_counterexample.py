"""Why the gap prescreening matters.

Two candidate Q-functions fit the data equally well and report the same
initial value, but one of them points the greedy policy at a zero-reward
branch.  Without prescreening an adversarial tie-break picks it.
"""
# %%
from pabc_lab import PabcConfig, build_counterexample, pabc, policy_value
from pabc_lab.solvers import consistency_filters, loss_matrix

inst = build_counterexample()
print("members:", inst.F.names(), "weights:", inst.W.names())
print("v* =", inst.annotations["v_star"])

# %% Both members have zero population loss against every weight.
print(loss_matrix(inst.F, inst.W, inst.dD))

# %% C_gap = 0 with ties broken toward the bad member.
sel = pabc(inst.F, inst.W, inst.dD, PabcConfig(alpha=0.0, c_gap=0.0, preferred_member=1))
print(sel.name, "policy value", policy_value(inst.mdp, sel.policy).value)

# %% C_gap = 1 removes the bad member before selection.
sel = pabc(inst.F, inst.W, inst.dD, PabcConfig(alpha=0.0, c_gap=1.0, preferred_member=1))
print(sel.name, "policy value", policy_value(inst.mdp, sel.policy).value)

# %% Policy and return consistency checks keep everything.
rep = consistency_filters(inst.F, inst.W, inst.dD, inst.annotations["v_star"])
print("filters change nothing:", rep.changes_nothing)
