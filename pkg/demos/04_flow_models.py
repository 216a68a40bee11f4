"""Train per-group flow models and compare the five variants.

The gravity baseline (g) is log-linear in population and distance. The deep
variants score concat[p_i, p_j, x_i, x_j, (pi_j), dis_ij] with a LeakyReLU
stack and allocate each origin's observed outflow by softmax. Segmentation
(+s) fits one net per social group; visitor characteristics (+v) add the
destination's observed visitor mix to the features.

A smaller hidden stack keeps this demo quick; drop the `hidden=` override to
train the full 6x256 + 9x128 architecture.
"""

from mobiseg.models import TrainConfig, evaluate_variants
from mobiseg.synth import SynthConfig, generate_city

dataset, _ = generate_city(SynthConfig(seed=17, n_cbgs=80, extent_km=14.0,
                                       spatial_segregation=0.7, homophily=0.7,
                                       poi_placement_coupling=0.1,
                                       mobility_rate=0.8))

config = TrainConfig(attribute="income", variant="dg", k_dest=15, epochs=8,
                     runs=2, seed=3, hidden=(64, 64, 32), learning_rate=2e-3)
report, models = evaluate_variants(dataset, config,
                                   variants=["g", "dg", "dg+s", "dg+v", "dg+s+v"])

print("mean metrics over runs (test split):")
print(f"{'variant':8s} {'cpc':>7s} {'jsd':>7s} {'pearson':>8s} {'rmse':>8s}")
for m in report.means:
    print(f"{m['variant']:8s} {m['cpc']:7.4f} {m['jsd']:7.4f} "
          f"{m['pearson']:8.4f} {m['rmse']:8.3f}")

model = models[("dg+s+v", 0)]
print(f"\ndg+s+v run 0 trained {len(model.models)} group nets "
      f"on {len(model.train_origin_ids)} origins; "
      f"final epoch losses: { {g: round(l[-1], 4) for g, l in model.epoch_losses.items()} }")
