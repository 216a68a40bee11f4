"""Score CBGs: visitor-mix segregation, neighborhood bridging, TOPSIS ranking.

The segregation index measures how uneven a CBG's visitor mix is (0 = every
group equally represented, 1 = single-group). The bridging index measures how
diverse its surrounding resident population is. Ranking by TOPSIS surfaces
CBGs that are both segregated and surrounded by diversity: prime candidates
for an intervention.
"""

from mobiseg.data import group_proportions
from mobiseg.segregation import bridging_index, score_cbgs, segregation_index, visitor_mix
from mobiseg.synth import SynthConfig, generate_city

dataset, _ = generate_city(SynthConfig(seed=7, n_cbgs=100, extent_km=15.0,
                                       spatial_segregation=0.8, homophily=0.6,
                                       mobility_rate=0.8))
theta = group_proportions(dataset, "income")

target = dataset.cbg_ids[40]
mix = visitor_mix(dataset, theta, target)
si = segregation_index(mix.pi)
bi, neighborhood = bridging_index(dataset, theta, target, k_bridge=20)
print(f"{target}: visitor mix {mix.pi.round(3)}, SI = {si:.3f}")
print(f"{target}: neighborhood mix {neighborhood.round(3)}, BI = {bi:.3f}")

rows = score_cbgs(dataset, theta, dataset.cbg_ids, k_bridge=20)
print("\ntop 5 intervention candidates (high SI and high BI):")
for r in rows[:5]:
    print(f"  {r.cbg}: closeness={r.topsis_closeness:.3f} "
          f"SI={r.si:.3f} BI={r.bi:.3f}")
