import numpy as np
import pytest

import wmevade as wm


def test_analytics_anchor_values():
    assert wm.exact_ensemble_verification(2, 2) == pytest.approx(0.75, abs=1e-12)
    assert wm.exact_ensemble_verification(3, 10) == pytest.approx(0.43, abs=1e-12)
    assert wm.exact_ensemble_verification(7, 10) == pytest.approx(0.31717, abs=1e-10)
    r = wm.simulate_ensemble_verification(3, 10, trials=100000, seed=5)
    assert abs(r["estimate"] - 0.43) <= 3 * r["standard_error"]
    assert wm.detector_verified_fraction(1.0, 1.0, 10) == pytest.approx(0.1)


def test_claim_threshold_rule():
    assert wm.claim_threshold(0.5, 10) == 5
    assert wm.claim_threshold(0.8, 10) == 8
    assert wm.claim_threshold(0.3, 10) == 3
    with pytest.raises(Exception):
        wm.claim_threshold(0.0, 10)


def test_training_and_prediction_roundtrip(tmp_path):
    data = wm.make_synth_digits(400, seed=3, train_split=True)
    arch = wm.Architecture.parse("input 28 28 1\nflatten\ndense 32 relu\nsoftmax 10\n")
    model, losses = wm.train(wm.init_model(arch, 7), data, epochs=6, batch_size=32,
                             learning_rate=0.1, seed=7)
    assert len(losses) == 6
    assert losses[-1] < losses[0]
    assert wm.accuracy(model, data) > 0.8

    img = data.image(0)
    assert img.shape == (28, 28)
    label = wm.predict(model, img)
    assert 0 <= label < 10

    probs = wm.forward(model, data)
    assert probs.shape == (400, 10)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-5)

    path = str(tmp_path / "model.wmnn")
    wm.save_model(model, path)
    back = wm.load_model(path)
    assert wm.predict(back, img) == label


def test_gradient_check_small_net():
    arch = wm.Architecture.parse("input 6\ndense 5 relu\nsoftmax 3\n")
    model = wm.init_model(arch, 11)
    rng = np.random.default_rng(4)
    img = rng.uniform(-1, 1, size=(1, 1, 6)).astype(np.float32)
    assert wm.gradient_check(model, img, 1) < 1e-4


def test_watermark_embed_and_verify():
    clean = wm.make_synth_digits(300, seed=9, train_split=True)
    images = wm.generate_trigger_images(8, seed=21, delta=4.0)
    triggers = wm.assign_random_labels(images, classes=10, seed=22)
    triggers.owner_id = "owner-py"

    arch = wm.Architecture.parse("input 28 28 1\nflatten\ndense 32 relu\nsoftmax 10\n")
    model = wm.embed_from_scratch(clean, triggers, arch, epochs=4, batch_size=32,
                                  learning_rate=0.1, seed=23, replication=40)
    assert model.watermarked
    assert wm.trigger_accuracy(model, triggers) == 1.0

    report = wm.verify_model(model, triggers, epsilon=0.9)
    assert report.claim
    assert report.correct == 8

    # black-box oracle as a plain python callable
    always_wrong = wm.verify(lambda image: (triggers.labels[0] + 1) % 10, triggers, 0.5)
    assert not always_wrong.claim


def test_ensemble_gateway_votes():
    clean = wm.make_synth_digits(200, seed=31, train_split=True)
    arch = wm.Architecture.parse("input 28 28 1\nflatten\ndense 24 relu\nsoftmax 10\n")
    models = []
    for s in (1, 2, 3):
        m, _ = wm.train(wm.init_model(arch, s), clean, epochs=2, batch_size=32,
                        learning_rate=0.1, seed=s)
        models.append(m)
    gw = wm.EnsembleGateway(models, tie_break_seed=5)
    img = clean.image(0)
    label = gw.predict(img)
    assert 0 <= label < 10
    assert gw.query_count == 1

    # unanimous clean answers pass straight through the vote
    votes = [wm.predict(m, img) for m in models]
    if len(set(votes)) == 1:
        assert label == votes[0]


def test_detector_gateway_flags_triggers():
    digits = wm.make_synth_digits(240, seed=41, train_split=True)
    arch = wm.Architecture.parse("input 28 28 1\nflatten\ndense 16 relu\nsoftmax 10\n")
    stolen, _ = wm.train(wm.init_model(arch, 4), digits, epochs=3, batch_size=32,
                         learning_rate=0.1, seed=4)

    clean = [digits.image(i) for i in range(60)]
    trig = wm.generate_trigger_images(60, seed=42)
    dd = wm.build_detector_dataset(stolen, clean, trig, seed=43)
    assert dd.feature_width == 16
    det = wm.train_detector(stolen, dd, epochs=20, batch_size=32, learning_rate=0.02, seed=44)

    ev = wm.evaluate_detector(det, stolen, [digits.image(i) for i in range(60, 100)],
                              wm.generate_trigger_images(40, seed=45))
    assert ev.accuracy > 0.8

    gw = wm.DetectorGateway(stolen, det, answer_seed=46)
    label = gw.predict(trig[0])
    assert 0 <= label < 10
