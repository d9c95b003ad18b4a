import numpy as np
import pytest

import seld6dof.autodiff as ad
from seld6dof import accdoa
from seld6dof.errors import ContractError, DataError, NumericError
from seld6dof.labels import EventLabel, frame_activity, load_labels, save_labels, \
    vec_from_angles
from conftest import central_diff, rel_err

# hand-enumerated admissible track->source maps (oracle side)
HAND_P1 = [(0, 0, 0)]
HAND_P2 = [(0, 0, 1), (0, 1, 0), (1, 0, 0), (0, 1, 1), (1, 0, 1), (1, 1, 0)]
HAND_P3 = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]


def oracle_loss(pred, target):
    """Independent brute-force minimum over all admissible assignments."""
    total = 0.0
    T = target.n_frames
    for t in range(T):
        for c in range(accdoa.N_CLASSES):
            k = int(target.counts[t, c])
            block = pred[t, :, c, :]
            if k == 0:
                total += np.mean(block ** 2)
                continue
            pats = {1: HAND_P1, 2: HAND_P2, 3: HAND_P3}[k]
            best = min(np.mean((block - target.slots[t, c, list(p)]) ** 2)
                       for p in pats)
            total += best
    return total / (T * accdoa.N_CLASSES)


def random_target(r, T=2, max_k=3):
    labels = []
    track = 0
    for t in range(T):
        for c in r.choice(12, size=r.integers(0, 4), replace=False):
            for _ in range(r.integers(1, max_k + 1)):
                u = r.normal(size=3)
                u /= np.linalg.norm(u)
                labels.append(EventLabel(class_id=int(c), track_id=track,
                                         onset=t * 0.1, offset=(t + 1) * 0.1,
                                         doa={t: u}))
                track += 1
    return accdoa.encode_targets(labels, T)


def ev(cid, frame, az, el, track=0):
    return EventLabel(class_id=cid, track_id=track, onset=frame * 0.1,
                      offset=(frame + 1) * 0.1,
                      doa={frame: vec_from_angles(az, el)})


# ------------------------------------------------------------------- encoding

def test_encode_empty():
    tgt = accdoa.encode_targets([], 4)
    assert np.all(tgt.slots == 0) and np.all(tgt.counts == 0)
    assert np.all(tgt.dense() == 0)


def test_encode_single_source_duplicates_to_all_tracks():
    tgt = accdoa.encode_targets([ev(5, 2, 0.0, 0.0)], 4)
    dense = tgt.dense()
    for track in range(3):
        np.testing.assert_allclose(dense[2, track, 5], [1, 0, 0], atol=1e-12)
    assert tgt.counts[2, 5] == 1
    # everything else stays zero
    mask = np.ones((4, 3, 12, 3), dtype=bool)
    mask[2, :, 5, :] = False
    assert np.all(dense[mask] == 0)


def test_encode_rejects_oversubscribed_class():
    events = [ev(3, 1, 10.0 * k, 0.0, track=k) for k in range(4)]
    with pytest.raises(DataError):
        accdoa.encode_targets(events, 3)


def test_pattern_enumeration_matches_hand_lists():
    assert sorted(accdoa._PATTERNS[1]) == sorted(HAND_P1)
    assert sorted(accdoa._PATTERNS[2]) == sorted(HAND_P2)
    assert sorted(accdoa._PATTERNS[3]) == sorted(HAND_P3)
    assert len(accdoa._PATTERNS[2]) == 6 and len(accdoa._PATTERNS[3]) == 6


# ----------------------------------------------------------------------- loss

def test_loss_zero_on_admissible_assignment(rng):
    tgt = random_target(rng, T=3)
    assert float(accdoa.adpit_loss(tgt.dense(), tgt).data) == 0.0
    # any permutation of the dense assignment's tracks is admissible too
    perm = tgt.dense()[:, [2, 0, 1], :, :]
    assert float(accdoa.adpit_loss(perm, tgt).data) == 0.0


def test_loss_track_permutation_invariance(rng):
    tgt = random_target(rng, T=2)
    pred = rng.normal(size=(2, 3, 12, 3)) * 0.5
    base = float(accdoa.adpit_loss(pred, tgt).data)
    for order in [(1, 0, 2), (2, 1, 0), (1, 2, 0)]:
        assert float(accdoa.adpit_loss(pred[:, order], tgt).data) == base


def test_loss_matches_bruteforce_oracle(rng):
    for _ in range(60):
        tgt = random_target(rng, T=2)
        pred = rng.normal(size=(2, 3, 12, 3)) * 0.7
        mine = float(accdoa.adpit_loss(pred, tgt).data)
        assert abs(mine - oracle_loss(pred, tgt)) <= 1e-9


def test_loss_positive_off_assignment(rng):
    tgt = accdoa.encode_targets([ev(0, 0, 0.0, 0.0)], 1)
    pred = np.zeros((1, 3, 12, 3))
    loss = float(accdoa.adpit_loss(pred, tgt).data)
    assert loss > 0


def test_loss_gradient_vs_finite_difference(rng):
    tgt = random_target(rng, T=2)
    pred = rng.normal(size=(2, 3, 12, 3)) * 0.6
    tp = ad.Tensor(pred, requires_grad=True)
    ad.backward(accdoa.adpit_loss(tp, tgt))

    def loss():
        return float(accdoa.adpit_loss(pred, tgt).data)

    assert rel_err(tp.grad, central_diff(loss, pred)) < 1e-6


def test_loss_nan_reports_frame():
    tgt = accdoa.encode_targets([], 3)
    pred = np.zeros((3, 3, 12, 3))
    pred[2, 1, 4, 0] = np.nan
    with pytest.raises(NumericError) as e:
        accdoa.adpit_loss(pred, tgt)
    assert "frame 2" in str(e.value)


def test_loss_shape_mismatch():
    tgt = accdoa.encode_targets([], 3)
    with pytest.raises(ContractError):
        accdoa.adpit_loss(np.zeros((2, 3, 12, 3)), tgt)


# ------------------------------------------------------------------- decoding

def test_decode_all_zero():
    assert accdoa.decode(np.zeros((4, 3, 12, 3))) == []


def test_decode_single_track():
    pred = np.zeros((2, 3, 12, 3))
    pred[1, 0, 7] = [0.9, 0.0, 0.0]
    (est,) = accdoa.decode(pred)
    assert est.frame == 1 and est.class_id == 7
    assert abs(est.doa.az_deg) < 1e-9 and abs(est.doa.el_deg) < 1e-9
    assert est.score == pytest.approx(0.9)


def test_decode_merges_close_tracks():
    pred = np.zeros((1, 3, 12, 3))
    pred[0, 0, 2] = 0.8 * vec_from_angles(-2.5, 0.0)
    pred[0, 1, 2] = 0.8 * vec_from_angles(2.5, 0.0)
    ests = accdoa.decode(pred)
    assert len(ests) == 1
    assert abs(ests[0].doa.az_deg) < 1e-6  # symmetric pair -> bisector
    assert ests[0].score == pytest.approx(0.8)


def test_decode_keeps_distant_tracks_separate():
    pred = np.zeros((1, 3, 12, 3))
    pred[0, 0, 2] = 0.8 * vec_from_angles(-40.0, 0.0)
    pred[0, 1, 2] = 0.8 * vec_from_angles(40.0, 0.0)
    assert len(accdoa.decode(pred)) == 2


def test_decode_threshold_validation():
    with pytest.raises(ContractError):
        accdoa.decode(np.zeros((1, 3, 12, 3)), activity_threshold=2.0)


def test_encode_decode_roundtrip(rng):
    events = [ev(1, 0, 30.0, 10.0), ev(4, 0, -120.0, -5.0),
              ev(1, 1, 150.0, 40.0, track=1), ev(9, 2, 75.0, -30.0)]
    # same-class pair: frames 0 and 1 do not overlap, frame-wise decode is exact
    tgt = accdoa.encode_targets(events, 3)
    ests = accdoa.decode(tgt.dense())
    got = {(e.frame, e.class_id): e for e in ests}
    for event in events:
        for f, u in event.doa.items():
            e = got[(f, event.class_id)]
            ang = np.degrees(np.arccos(np.clip(np.dot(e.doa.u, u), -1, 1)))
            assert ang < 0.1


# --------------------------------------------------------------------- labels

def test_label_csv_roundtrip(tmp_path, rng):
    events = [ev(0, 0, 12.0, 3.0), ev(0, 1, -100.0, -40.0, track=1),
              ev(11, 5, 179.0, 60.0)]
    path = tmp_path / "labels.csv"
    save_labels(path, events)
    loaded = load_labels(path)
    assert len(loaded) == 3
    by_key = {(l.class_id, l.track_id): l for l in loaded}
    for event in events:
        l = by_key[(event.class_id, event.track_id)]
        for f, u in event.doa.items():
            np.testing.assert_allclose(l.doa[f], u, atol=1e-5)


def test_load_labels_splits_noncontiguous_runs(tmp_path):
    path = tmp_path / "labels.csv"
    path.write_text("frame,class,track,az_deg,el_deg\n"
                    "0,3,0,10.0,0.0\n1,3,0,11.0,0.0\n5,3,0,12.0,0.0\n")
    loaded = load_labels(path)
    assert len(loaded) == 2
    assert sorted(len(l.doa) for l in loaded) == [1, 2]


def test_frame_activity():
    events = [ev(2, 0, 0.0, 0.0), ev(3, 1, 90.0, 0.0)]
    frames = frame_activity(events, 3)
    assert [len(f) for f in frames] == [1, 1, 0]
    assert frames[0][0][0] == 2 and frames[1][0][0] == 3


def test_estimates_csv_roundtrip(tmp_path):
    pred = np.zeros((2, 3, 12, 3))
    pred[0, 0, 3] = [0.0, 0.9, 0.0]
    pred[1, 2, 8] = [0.0, 0.0, -0.7]
    ests = accdoa.decode(pred)
    path = tmp_path / "est.csv"
    accdoa.save_estimates(path, ests)
    loaded = accdoa.load_estimates(path)
    assert len(loaded) == 2
    assert loaded[0].class_id == 3 and loaded[0].frame == 0
    assert loaded[0].doa.az_deg == pytest.approx(90.0, abs=1e-3)
    assert loaded[1].doa.el_deg == pytest.approx(-90.0, abs=1e-3)
    assert loaded[1].score == pytest.approx(0.7, abs=1e-5)


def test_event_label_validation():
    with pytest.raises(DataError):
        EventLabel(class_id=12, track_id=0, onset=0.0, offset=1.0)
    with pytest.raises(DataError):
        EventLabel(class_id=0, track_id=0, onset=1.0, offset=1.0)
