import numpy as np
import pytest

from fixed_dg.autodiff import Tape
from fixed_dg.errors import ConfigError
from fixed_dg.losses import cross_entropy, domain_adv_loss
from fixed_dg.mixup import MixPlan, one_hot, pair_shuffle
from fixed_dg.models import (
    ArchSpec,
    Cnn1dBody,
    MlpBody,
    build_model,
    load_checkpoint,
    save_checkpoint,
)

CNN_SPEC = ArchSpec(in_shape=(6, 128), num_classes=5, num_domains=3, body=Cnn1dBody(), bottleneck_dim=64)
MLP_SPEC = ArchSpec(in_shape=(2,), num_classes=3, num_domains=2, body=MlpBody((16, 16)), bottleneck_dim=8)


def test_cnn_bottleneck_width(rng):
    bundle = build_model(CNN_SPEC, rng)
    fw = bundle.forward(Tape(), rng.uniform(-1, 1, (4, 6, 128)), training=False)
    assert fw.z.data.shape == (4, 64)
    assert fw.logits.data.shape == (4, 5)


def test_same_seed_bitwise_identical_params():
    b1 = build_model(CNN_SPEC, np.random.default_rng(42))
    b2 = build_model(CNN_SPEC, np.random.default_rng(42))
    assert set(b1.params) == set(b2.params)
    for name in b1.params:
        assert np.array_equal(b1.params[name], b2.params[name]), name


def test_mlp_logit_shape(rng):
    bundle = build_model(MLP_SPEC, rng)
    fw = bundle.forward(Tape(), rng.uniform(-1, 1, (7, 2)), training=False)
    assert fw.logits.data.shape == (7, 3)


def test_domain_logit_shape(rng):
    bundle = build_model(MLP_SPEC, rng)
    fw = bundle.forward(Tape(), rng.uniform(-1, 1, (7, 2)), training=True, with_domain=True)
    assert fw.dom_logits.data.shape == (7, 2)


def test_eval_forward_is_repeatable(rng):
    bundle = build_model(CNN_SPEC, rng)
    x = rng.uniform(-1, 1, (3, 6, 128))
    # train-mode pass first, so running stats are nontrivial
    bundle.forward(Tape(), x, training=True)
    a = bundle.forward(Tape(), x, training=False).logits.data
    b = bundle.forward(Tape(), x, training=False).logits.data
    assert np.array_equal(a, b)


def test_classifier_loss_ignores_discriminator_params(rng):
    bundle = build_model(MLP_SPEC, rng)
    t = Tape()
    fw = bundle.forward(t, rng.uniform(-1, 1, (6, 2)), training=True, with_domain=True)
    loss = cross_entropy(t, fw.logits, one_hot(rng.integers(0, 3, 6), 3))
    grads = t.backward(loss)
    assert np.array_equal(grads[fw.params["disc.W"].node_id], np.zeros((8, 2)))
    assert np.abs(grads[fw.params["classifier.W"].node_id]).max() > 0


def test_eta_does_not_touch_classifier_gradients(rng):
    x = rng.uniform(-1, 1, (6, 2))
    y = rng.integers(0, 3, 6)
    dom = rng.integers(0, 2, 6)

    def grads_for(eta):
        bundle = build_model(MLP_SPEC, np.random.default_rng(5))
        t = Tape()
        fw = bundle.forward(t, x, training=True, eta=eta, with_domain=True)
        loss = t.add(
            cross_entropy(t, fw.logits, one_hot(y, 3)),
            domain_adv_loss(t, fw.dom_logits, dom, 2),
        )
        g = t.backward(loss)
        return g[fw.params["classifier.W"].node_id], g[fw.params["feat.0.W"].node_id]

    cls_a, feat_a = grads_for(0.5)
    cls_b, feat_b = grads_for(2.0)
    assert np.array_equal(cls_a, cls_b)  # classifier head untouched by eta
    assert not np.array_equal(feat_a, feat_b)  # adversarial path scales with eta


def test_bottleneck_mix_changes_classifier_branch_only(rng):
    bundle = build_model(MLP_SPEC, rng)
    x = rng.uniform(-1, 1, (6, 2))
    plan = MixPlan(lam=0.4, perm=pair_shuffle(6, rng), site="bottleneck")
    fw = bundle.forward(Tape(), x, training=True, mix_plan=plan, with_domain=True)
    expect = plan.lam * fw.z.data + (1 - plan.lam) * fw.z.data[plan.perm]
    assert np.allclose(fw.z_cls.data, expect, atol=1e-15)
    # discriminator consumes the unmixed feature
    plain = bundle.forward(Tape(), x, training=True, with_domain=True)
    assert np.array_equal(fw.dom_logits.data, plain.dom_logits.data)


def test_hidden_mix_site_validated(rng):
    bundle = build_model(MLP_SPEC, rng)
    plan = MixPlan(lam=0.5, perm=np.arange(4), site="hidden", hidden_layer=99)
    with pytest.raises(ConfigError):
        bundle.forward(Tape(), rng.uniform(-1, 1, (4, 2)), training=True, mix_plan=plan)


def test_feature_width_constant_across_mix_sites(rng):
    bundle = build_model(MLP_SPEC, rng)
    x = rng.uniform(-1, 1, (4, 2))
    widths = set()
    for site, layer in (("input", None), ("hidden", 0), ("hidden", 2), ("bottleneck", None)):
        plan = MixPlan(lam=0.3, perm=pair_shuffle(4, rng), site=site, hidden_layer=layer)
        model_plan = None if site == "input" else plan
        fw = bundle.forward(Tape(), x, training=True, mix_plan=model_plan)
        widths.add(fw.z_cls.data.shape[1])
    assert widths == {8}


def test_zero_dims_rejected():
    with pytest.raises(ConfigError):
        ArchSpec(in_shape=(0,), num_classes=2, num_domains=2)


def test_checkpoint_roundtrip(tmp_path, rng):
    bundle = build_model(CNN_SPEC, rng)
    x = rng.uniform(-1, 1, (3, 6, 128))
    bundle.forward(Tape(), x, training=True)  # populate running stats
    path = tmp_path / "model.ckpt"
    save_checkpoint(bundle, path)
    loaded = load_checkpoint(path)
    assert loaded.spec == bundle.spec
    for name in bundle.params:
        assert np.array_equal(loaded.params[name], bundle.params[name]), name
    for name in bundle.bn:
        assert np.array_equal(loaded.bn[name].mean, bundle.bn[name].mean)
        assert np.array_equal(loaded.bn[name].var, bundle.bn[name].var)
    assert np.array_equal(loaded.predict_logits(x), bundle.predict_logits(x))
