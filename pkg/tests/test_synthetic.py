import numpy as np
import pytest

from sifkit.maskops import rle_decode, stability_score
from sifkit.numcore import Rng
from sifkit.synthetic import (
    SynthConfig,
    generate_dataset,
    make_prototypes,
    sample_embedding,
    training_samples,
)


@pytest.fixture(scope="module")
def small_cfg():
    return SynthConfig(
        image_h=48, image_w=48, c_in=12, embed_h=4, embed_w=4,
        n_base=3, n_novel=2, n_train_images=4, n_test_images=3,
        points_per_side=6, shots_per_novel=4, seed=99,
    )


@pytest.fixture(scope="module")
def dataset(small_cfg):
    return generate_dataset(small_cfg)


class TestPrototypes:
    def test_pairwise_cosine_below_bound(self, dataset):
        protos = list(dataset.prototypes.values())
        for i in range(len(protos)):
            assert abs(np.linalg.norm(protos[i]) - 1.0) < 1e-12
            for j in range(i + 1, len(protos)):
                assert float(protos[i] @ protos[j]) < 0.3

    def test_nearest_prototype_is_exact_for_noiseless_features(self, dataset):
        # Direct enumeration: at sigma 0 the best-cosine prototype is the
        # true one for every category, with margin from the 0.3 bound.
        protos = dataset.prototypes
        for cat, proto in protos.items():
            sims = {other: float(proto @ p) for other, p in protos.items()}
            assert max(sims, key=sims.get) == cat

    def test_separation_failure_raises(self):
        with pytest.raises(ValueError, match="could not separate"):
            make_prototypes(50, 2, 0.01, Rng(0))


class TestGeneration:
    def test_deterministic_per_seed(self, small_cfg):
        a = generate_dataset(small_cfg)
        b = generate_dataset(small_cfg)
        assert len(a.train_bundles) == len(b.train_bundles)
        for ba, bb in zip(a.train_bundles + a.test_bundles, b.train_bundles + b.test_bundles):
            for ta, tb in zip(ba.embeddings + ba.logits, bb.embeddings + bb.logits):
                np.testing.assert_array_equal(ta, tb)
        assert a.test_annotations.to_dict() == b.test_annotations.to_dict()

    def test_different_seed_differs(self, small_cfg, dataset):
        import dataclasses

        other = generate_dataset(dataclasses.replace(small_cfg, seed=100))
        assert not np.array_equal(
            other.train_bundles[0].embeddings[0], dataset.train_bundles[0].embeddings[0]
        )

    def test_masks_pairwise_disjoint(self, dataset):
        for shapes in list(dataset.train_shapes.values()) + list(dataset.test_shapes.values()):
            for i in range(len(shapes)):
                for j in range(i + 1, len(shapes)):
                    assert not (shapes[i].mask & shapes[j].mask).any()

    def test_annotation_rle_equals_placed_mask(self, dataset, small_cfg):
        by_image = dataset.test_shapes
        consumed = {k: 0 for k in by_image}
        for ann in dataset.test_annotations.annotations:
            img = ann["image_id"]
            shape = by_image[img][consumed[img]]
            consumed[img] += 1
            decoded = rle_decode(
                ann["segmentation"]["counts"], small_cfg.image_h, small_cfg.image_w
            )
            np.testing.assert_array_equal(decoded, shape.mask)
            assert ann["category_id"] == shape.category_id

    def test_every_bundle_validates(self, dataset):
        for b in dataset.train_bundles + dataset.test_bundles:
            b.validate()

    def test_all_base_classes_in_train_labels(self, dataset, small_cfg):
        seen = set()
        for labels in dataset.train_labels.values():
            seen.update(labels)
        assert set(small_cfg.base_ids) <= seen
        assert 0 in seen  # background points exist

    def test_all_categories_have_test_gt(self, dataset, small_cfg):
        cats = {a["category_id"] for a in dataset.test_annotations.annotations}
        assert cats == set(small_cfg.base_ids) | set(small_cfg.novel_ids)

    def test_train_labels_match_covering_shape(self, dataset):
        for bundle in dataset.train_bundles:
            labels = dataset.train_labels[bundle.image_id]
            shapes = dataset.train_shapes[bundle.image_id]
            for p, label in zip(bundle.points, labels):
                covering = next((s.category_id for s in shapes if s.mask[p.y, p.x]), 0)
                assert covering == label

    def test_every_shape_covered_by_a_grid_point(self, dataset):
        # Shape sizes are chosen so the point grid cannot miss any object.
        for bundle, shapes in zip(
            dataset.test_bundles, (dataset.test_shapes[b.image_id] for b in dataset.test_bundles)
        ):
            for s in shapes:
                assert any(s.mask[p.y, p.x] for p in bundle.points)

    def test_shot_pool_shapes(self, dataset, small_cfg):
        assert set(dataset.shot_pool) == set(small_cfg.novel_ids)
        for shots in dataset.shot_pool.values():
            assert len(shots) == small_cfg.shots_per_novel
            for s in shots:
                assert s.shape == (small_cfg.c_in, small_cfg.embed_h, small_cfg.embed_w)

    def test_zero_sigma_embeddings_equal_prototype(self, small_cfg):
        import dataclasses

        ds = generate_dataset(dataclasses.replace(small_cfg, noise_sigma=0.0))
        bundle = ds.train_bundles[0]
        labels = ds.train_labels[bundle.image_id]
        for emb, label in zip(bundle.embeddings, labels):
            np.testing.assert_array_equal(emb[:, 0, 0], ds.prototypes[label])
            assert np.all(emb == emb[:, :1, :1])  # constant over space

    def test_training_samples_flatten(self, dataset, small_cfg):
        samples = training_samples(dataset)
        n_points = small_cfg.points_per_side**2
        assert len(samples) == small_cfg.n_train_images * n_points


class TestLogitModes:
    def test_clean_logits_have_unit_stability(self, dataset):
        for bundle in dataset.train_bundles[:2]:
            for g in bundle.logits:
                assert stability_score(g, tau=0.0, delta=1.0) == 1.0

    def test_noisy_logits_exercise_stability_filter(self, small_cfg):
        import dataclasses

        ds = generate_dataset(dataclasses.replace(small_cfg, noisy_logits=True))
        scores = []
        for bundle in ds.test_bundles:
            for g, p in zip(bundle.logits, bundle.points):
                if (g > 0)[p.y, p.x]:  # object point
                    scores.append(stability_score(g, tau=0.0, delta=1.0))
        assert scores and any(s < 1.0 for s in scores)
        assert all(0.0 <= s <= 1.0 for s in scores)

    def test_noisy_mask_binarizes_to_exact_annotation(self, small_cfg):
        # The ramp's sign is pinned to the rasterized shape, so thresholding
        # at tau reproduces the annotation exactly.
        import dataclasses

        ds = generate_dataset(dataclasses.replace(small_cfg, noisy_logits=True))
        bundle = ds.test_bundles[0]
        shapes = ds.test_shapes[bundle.image_id]
        for g, p in zip(bundle.logits, bundle.points):
            covering = next((s for s in shapes if s.mask[p.y, p.x]), None)
            if covering is None:
                continue
            np.testing.assert_array_equal(g > 0.0, covering.mask)
