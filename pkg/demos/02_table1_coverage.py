"""A one-step instance where the optimal action never appears in the data.

The density ratio of the optimal policy does not exist, yet the
discriminator-based error eps_W stays finite.  Direct evaluation gives 0.2
rather than the published 0; both numbers are printed.
"""
# %%
from pabc_lab import build_table1_example
from pabc_lab.classes import eps_F, eps_F_inf, eps_W

inst = build_table1_example()
ann = inst.annotations
print("rewards   ", inst.mdp.rewards[0][0])
print("f         ", inst.F[1][0][0])
print("d*        ", ann["d_star"])
print("d^D       ", inst.dD[0][0])
print("w         ", inst.W[0][0][0])

# %%
print("concentrability", ann["concentrability"], "w* exists", ann["w_star_exists"])
print("eps_W computed", ann["eps_W"], "published", ann["eps_W_claimed"],
      "difference", ann["eps_W_discrepancy"])
print("eps_F", eps_F(inst.F, inst.W, inst.mdp, inst.dD)[0], "eps_F_inf", eps_F_inf(inst.F, inst.mdp)[0])
print("recheck eps_W", eps_W(inst.F, inst.W, inst.mdp, inst.dD)[0])
