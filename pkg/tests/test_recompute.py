import pytest

from memsched import ConfigError, build_offload_plan
from memsched.netgen import make_uniform_chain
from memsched.netgraph import build_schedule
from memsched.costmodel import CostConfig, build_costs
from memsched.recompute import (
    build_segments,
    demand_peak,
    first_backward_use,
    min_pool_bytes,
    plan,
    step_demands,
)


@pytest.fixture(scope="module")
def offloaded(alexnet, sched):
    return frozenset(build_offload_plan(alexnet, sched).cp_ids)


def seg_names(alexnet, segments):
    return [[alexnet.layers[m].name for m in seg.members] for seg in segments]


def test_segments_alexnet(alexnet, sched):
    segs = build_segments(alexnet, sched)
    assert seg_names(alexnet, segs) == [
        ["relu1", "lrn1", "pool1"],
        ["relu2", "lrn2", "pool2"],
        ["relu3"],
        ["relu4"],
        ["relu5", "pool5"],
        ["relu6", "drop1"],
        ["relu7", "drop2"],
        ["softmax"],
    ]
    assert [alexnet.layers[s.anchors[0]].name for s in segs] == [
        "conv1", "conv2", "conv3", "conv4", "conv5", "fc1", "fc2", "fc3"]
    assert [s.index for s in segs] == list(range(8))


def test_first_backward_use_includes_checkpoint_readers(alexnet, sched):
    segs = build_segments(alexnet, sched)
    firsts = [first_backward_use(alexnet, sched, s) for s in segs]
    # Segment 7 holds only softmax, but fc3's backward at step 25 reads
    # drop2 from segment 6, so that segment is already needed at 25.
    assert firsts == [42, 38, 36, 34, 31, 28, 25, 24]


# Calibration targets for the bundled AlexNet fixture at batch 200.
@pytest.mark.parametrize("policy,extras,modes", [
    ("speed", 15, ("speed",) * 8),
    ("memory", 24, ("memory",) * 8),
    ("cost-aware", 18, ("memory",) + ("speed",) * 7),
])
def test_policy_extras_and_modes(alexnet, costs200, sched, policy, extras, modes):
    p = plan(alexnet, costs200, sched, policy)
    assert p.extra_forward_steps == extras
    assert p.modes == modes
    assert p.policy == policy


def test_predictions_per_segment(alexnet, costs200, sched):
    p = plan(alexnet, costs200, sched, "cost-aware")
    assert p.predictions == (
        958233600, 569036800, 207667200, 190361600,
        87244800, 16384000, 13907200, 2400000)
    # The threshold splits exactly at the demand floor.
    floor = min_pool_bytes(alexnet, costs200, sched)
    for pred, mode in zip(p.predictions, p.modes):
        assert (mode == "speed") == (pred <= floor)


@pytest.mark.parametrize("policy,off,want", [
    ("speed", False, {"conv1", "conv2", "conv3", "conv4", "conv5",
                      "fc1", "fc2", "fc3"}),
    ("speed", True, {"fc1", "fc2", "fc3"}),
    ("memory", True, {"drop1", "drop2", "fc1", "fc2", "fc3",
                      "pool1", "pool2", "pool5", "relu3", "relu4"}),
    ("cost-aware", True, {"fc1", "fc2", "fc3", "pool1"}),
    ("cost-aware", False, {"conv1", "conv2", "conv3", "conv4", "conv5",
                           "fc1", "fc2", "fc3", "pool1"}),
])
def test_spills_by_policy(alexnet, costs200, sched, offloaded, policy, off, want):
    ids = offloaded if off else frozenset()
    p = plan(alexnet, costs200, sched, policy, offloaded_ids=ids)
    assert {alexnet.layers[i].name for i in p.spill_ids} == want


def test_spill_ids_never_overlap_offloaded(alexnet, costs200, sched, offloaded):
    for policy in ("speed", "memory", "cost-aware"):
        p = plan(alexnet, costs200, sched, policy, offloaded_ids=offloaded)
        assert not (p.spill_ids & offloaded)


def test_segment_of(alexnet, costs200, sched):
    p = plan(alexnet, costs200, sched, "speed")
    assert p.segment_of(alexnet.layer("lrn2").id) == 1
    assert p.segment_of(alexnet.layer("softmax").id) == 7
    assert p.segment_of(alexnet.layer("conv3").id) is None


def test_unknown_policy_rejected(alexnet, costs200, sched):
    with pytest.raises(ConfigError, match="unknown recompute policy"):
        plan(alexnet, costs200, sched, "fastest")


def test_step_demands_alexnet(alexnet, costs200, sched):
    demands = step_demands(alexnet, costs200, sched)
    assert len(demands) == sched.num_steps
    want = {
        32: 83968000,    # pool5 backward
        40: 597196800,   # lrn2 backward
        42: 261273600,   # conv2 backward
        43: 576614400,   # pool1 backward
        44: 929280000,   # lrn1 backward, the overall floor
        45: 696960000,   # relu1 backward
        46: 232320000,   # conv1 backward
    }
    for step, nbytes in want.items():
        assert demands[step] == nbytes
    peak = demand_peak(alexnet, costs200, sched)
    assert (peak.nbytes, peak.step) == (929280000, 44)
    assert alexnet.layers[peak.layer_id].name == "lrn1"
    assert min_pool_bytes(alexnet, costs200, sched) == 929280000


def test_chain_floor_closed_form():
    # A uniform chain never needs more than four live activations under
    # the per-layer replay strategy.
    for n, cps in ((9, (3, 6)), (12, (3, 6, 9))):
        chain = make_uniform_chain(n, cps)
        cfg = CostConfig(batch=200)
        costs = build_costs(chain, cfg)
        sched = build_schedule(chain)
        c = 4 * 16 * 16 * 4 * 200
        assert min_pool_bytes(chain, costs, sched) == 4 * c
