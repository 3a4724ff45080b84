"""Score simulated answer policies over a real HTTP round trip.

Spins up the bundled chat-completions mock on a loopback port, evaluates the
fixture dataset against three canned policies, and prints the taxonomy-aware
metrics for each. "gold" answers everything correctly; "always_yes" fails
every gold-No negative, so no instance survives the all-five-questions rule;
"needs_description" answers from the description when present and guesses on
the scene-free membership probes.
"""

from pathlib import Path

from taxqa.evalclient import EndpointConfig, run_eval
from taxqa.metrics import judge_instance, metrics_report, per_depth_accuracy
from taxqa.mock_endpoint import MockEndpoint
from taxqa.questgen import build_dataset, generate_taxomps
from taxqa.scene import load_scene_graphs
from taxqa.taxonomy import load_taxonomy

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

taxonomy = load_taxonomy(FIXTURES / "taxonomy.txt")
scenes = load_scene_graphs(FIXTURES / "scenes_10.json")
instances, _ = build_dataset(scenes, taxonomy, seed=7, quota=4)
instances += generate_taxomps(taxonomy, seed=7)  # scene-free probes too
print(f"dataset: {len(instances)} instances, {5 * len(instances)} questions")


def fmt(value):
    return "absent" if value is None else f"{value:.3f}"


last_run = None
for behavior in ("gold", "always_yes", "needs_description"):
    with MockEndpoint(instances, behavior=behavior) as server:
        cfg = EndpointConfig(base_url=server.base_url, model_name=behavior,
                             max_in_flight=8, retries=0)
        run = run_eval(instances, cfg, mode="text")
    report = metrics_report(run.instance_set())
    print(f"\npolicy {behavior}: {server.stats.requests} requests")
    print(f"  overall accuracy:         {fmt(report.overall)}")
    print(f"  conditional accuracy:     {fmt(report.conditional)}")
    print(f"  hierarchical consistency: {fmt(report.hierarchical_consistency)}")
    last_run = run

# the description-dependent policy keeps the scene questions and collapses
# to coin flipping on the scene-free membership probes
s = last_run.instance_set()
print("\nwhere the last policy loses accuracy (per substitution depth):")
for depth, acc in sorted(per_depth_accuracy(s).items()):
    print(f"  depth {depth}: {acc:.3f}")

scene_results = [r for r in s.originals if not r.instance_id.startswith("taxomps|")]
probe_results = [r for r in s.originals if r.instance_id.startswith("taxomps|")]
print(f"scene-built originals judged correct: "
      f"{sum(judge_instance(r) for r in scene_results)}/{len(scene_results)}")
print(f"scene-free probes judged correct:     "
      f"{sum(judge_instance(r) for r in probe_results)}/{len(probe_results)}")

# each record keeps the renormalized two-way probability, not just the label
record = last_run.records[0]
print(f"\nfirst record: {record.instance_id}/{record.slot} "
      f"answer={record.answer} p_yes={record.p_yes:.3f} p_no={record.p_no:.3f}")
