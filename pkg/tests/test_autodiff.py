#!/usr/bin/env python3
"""
Unit tests for the numpy autodiff engine
Tests ops, the recorded graph, layers, Adam and the finite-difference checker
"""

import unittest
import sys
import os

import numpy as np

# Add the repository root to the path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from core.autodiff import (
    Tensor, Parameter, Graph, backward, no_grad, grad_check,
    Linear, Conv3d, Module, Adam, adam_step, ops,
    conv3d, conv_transpose3d, softmax, log_softmax, layer_norm,
    build_trilinear_plan, grid_sample_trilinear
)
from core.errors import CheckpointError, GraphError, NonFiniteError, ShapeMismatchError


class TestOps(unittest.TestCase):
    """Test forward values of individual ops"""

    def setUp(self):
        """Set up a seeded generator"""
        self.rng = np.random.default_rng(0)

    def test_softmax_uniform(self):
        """Test softmax of equal logits is uniform"""
        out = softmax(Tensor(np.zeros(3)))
        np.testing.assert_allclose(out.data, np.full(3, 1.0 / 3.0))

    def test_log_softmax_matches_log_of_softmax(self):
        """Test log_softmax agrees with log(softmax)"""
        x = self.rng.standard_normal((4, 5))
        np.testing.assert_allclose(log_softmax(Tensor(x)).data, np.log(softmax(Tensor(x)).data), atol=1e-12)

    def test_matmul_identity(self):
        """Test I3 @ A returns A"""
        a = self.rng.standard_normal((3, 3))
        np.testing.assert_array_equal(ops.matmul(Tensor(np.eye(3)), Tensor(a)).data, a)

    def test_conv3d_constant(self):
        """Test a 2^3 ones kernel over a 4^3 ones grid gives a 3^3 grid of 8s"""
        x = Tensor(np.ones((1, 1, 4, 4, 4)))
        w = Tensor(np.ones((1, 1, 2, 2, 2)))
        out = conv3d(x, w)
        self.assertEqual(out.shape, (1, 1, 3, 3, 3))
        np.testing.assert_allclose(out.data, np.full((1, 1, 3, 3, 3), 8.0))

    def test_conv_transpose3d_extent(self):
        """Test the transposed conv doubles the extent with k4 s2 p1"""
        x = Tensor(self.rng.standard_normal((2, 3, 2, 2, 2)))
        w = Tensor(self.rng.standard_normal((3, 5, 4, 4, 4)))
        self.assertEqual(conv_transpose3d(x, w, stride=2, padding=1).shape, (2, 5, 4, 4, 4))

    def test_cumsum_exclusive(self):
        """Test the exclusive cumulative sum starts at zero"""
        out = ops.cumsum(Tensor(np.array([1.0, 2.0, 3.0])), exclusive=True)
        np.testing.assert_array_equal(out.data, [0.0, 1.0, 3.0])

    def test_layer_norm_statistics(self):
        """Test layer norm output has zero mean and unit variance per row"""
        out = layer_norm(Tensor(self.rng.standard_normal((3, 16)) * 4 + 2)).data
        np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-10)
        np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-3)

    def test_trilinear_at_voxel_centre(self):
        """Test sampling exactly at a voxel centre returns that voxel"""
        grid = self.rng.standard_normal((1, 4, 4, 4, 2))
        point = np.array([[[(1 + 0.5) / 4, (2 + 0.5) / 4, (3 + 0.5) / 4]]])
        plan = build_trilinear_plan(point, (4, 4, 4))
        np.testing.assert_allclose(grid_sample_trilinear(Tensor(grid), plan).data[0, 0], grid[0, 1, 2, 3])

    def test_trilinear_outside_is_zero(self):
        """Test points outside the unit cube sample zero"""
        grid = np.ones((1, 4, 4, 4, 1))
        plan = build_trilinear_plan(np.array([[[1.2, 0.5, 0.5]]]), (4, 4, 4))
        self.assertEqual(float(grid_sample_trilinear(Tensor(grid), plan).data[0, 0, 0]), 0.0)

    def test_max_reduction(self):
        """Test max over axes and that ties send the gradient to the first maximum"""
        x = Tensor(np.array([[1.0, 3.0, 3.0], [2.0, -1.0, 0.5]]), requires_grad=True)
        with Graph():
            out = ops.max_(x, axis=1)
            np.testing.assert_array_equal(out.data, [3.0, 2.0])
            backward(ops.sum_(out), [x])
        np.testing.assert_array_equal(x.grad, [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]])
        kept = ops.max_(Tensor(self.rng.standard_normal((2, 3, 4))), axis=(0, 2), keepdims=True)
        self.assertEqual(kept.shape, (1, 3, 1))

    def test_trilinear_gradient_matches_dense_map(self):
        """Test the scattered grid gradient equals the transpose of the dense sampling map"""
        points = self.rng.uniform(-0.1, 1.1, size=(2, 7, 3))
        plan = build_trilinear_plan(points, (3, 3, 3))
        grid = Tensor(self.rng.standard_normal((2, 3, 3, 3, 2)), requires_grad=True)
        upstream = self.rng.standard_normal((2, 7, 2))
        with Graph():
            backward(ops.sum_(grid_sample_trilinear(grid, plan) * Tensor(upstream)), [grid])
        for b in range(2):
            dense = np.zeros((7, 27))
            for column, (index, weight) in enumerate(zip(plan.indices[b], plan.weights[b])):
                dense[column % 7, index] += weight
            np.testing.assert_allclose(grid.grad[b].reshape(27, 2), dense.T @ upstream[b], atol=1e-12)

    def test_shape_mismatch_names_op(self):
        """Test incompatible shapes raise an error naming the op"""
        with self.assertRaises(ShapeMismatchError) as ctx:
            ops.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros(4)))
        self.assertEqual(ctx.exception.op, "add")
        self.assertIn("(2, 3)", str(ctx.exception))

    def test_non_finite_forward(self):
        """Test log(0) is reported as a non-finite forward"""
        with self.assertRaises(NonFiniteError):
            ops.log(Tensor(np.zeros(2)))


class TestBackward(unittest.TestCase):
    """Test gradient propagation and graph bookkeeping"""

    def setUp(self):
        """Set up a leaf tensor"""
        self.x = Tensor(np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]), requires_grad=True)

    def test_sum_gradient_is_ones(self):
        """Test d sum(x) / dx is all ones"""
        with Graph():
            loss = ops.sum_(self.x)
            backward(loss)
        np.testing.assert_array_equal(self.x.grad, np.ones((2, 3)))

    def test_mean_square_gradient(self):
        """Test d mean(x^2) / dx = x for x = [1, 2]"""
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        with Graph():
            backward(ops.mean(ops.square(x)))
        np.testing.assert_allclose(x.grad, [1.0, 2.0])

    def test_shared_input_accumulates(self):
        """Test a tensor used twice collects both contributions"""
        with Graph():
            backward(ops.sum_(self.x * self.x))
        np.testing.assert_allclose(self.x.grad, 2.0 * self.x.data)

    def test_graph_consumed_once(self):
        """Test a second backward on the same graph is rejected"""
        with Graph():
            loss = ops.sum_(self.x)
            backward(loss)
            with self.assertRaises(GraphError):
                backward(loss)

    def test_non_scalar_loss(self):
        """Test backward refuses a non-scalar loss"""
        with Graph():
            with self.assertRaises(GraphError):
                backward(self.x * 2.0)

    def test_no_grad_records_nothing(self):
        """Test outputs computed under no_grad are constants"""
        with Graph() as graph:
            with no_grad():
                out = ops.sum_(self.x * 3.0)
        self.assertFalse(out.requires_grad)
        self.assertEqual(len(graph), 0)

    def test_unreached_parameter_gets_zero_grad(self):
        """Test parameters the loss does not reach get an explicit zero gradient"""
        used, unused = Parameter(np.ones(3)), Parameter(np.ones(2))
        with Graph():
            backward(ops.sum_(used * 2.0), parameters=[used, unused])
        np.testing.assert_array_equal(used.grad, np.full(3, 2.0))
        np.testing.assert_array_equal(unused.grad, np.zeros(2))

    def test_restricted_backward_skips_others(self):
        """Test leaves outside `parameters` keep no gradient"""
        a, b = Parameter(np.ones(2)), Parameter(np.ones(2))
        with Graph():
            backward(ops.sum_(a * b), parameters=[a])
        self.assertIsNotNone(a.grad)
        self.assertIsNone(b.grad)

    def test_backward_is_linear(self):
        """Test grad(a L1 + b L2) = a grad(L1) + b grad(L2)"""
        w = Parameter(np.random.default_rng(2).standard_normal((3, 2)))
        x = np.random.default_rng(3).standard_normal((4, 3))

        def losses():
            h = ops.matmul(Tensor(x), w)
            return ops.sum_(ops.softplus(h)), ops.mean(ops.square(h))

        grads = []
        for a, b in ((1.0, 0.0), (0.0, 1.0), (2.5, -0.75)):
            with Graph():
                first, second = losses()
                backward(ops.scale(first, a) + ops.scale(second, b), [w])
            grads.append(w.grad)
            w.grad = None
        np.testing.assert_allclose(grads[2], 2.5 * grads[0] - 0.75 * grads[1], rtol=1e-12, atol=1e-14)

    def test_frozen_module(self):
        """Test a frozen module passes gradients through but records none for its own weights"""
        layer = Linear(3, 2, np.random.default_rng(4))
        x = Parameter(np.ones((1, 3)))
        with Graph():
            with layer.frozen():
                out = ops.sum_(layer(x))
            backward(out, [x, layer.weight])
        self.assertTrue(layer.weight.requires_grad)
        np.testing.assert_allclose(x.grad, layer.weight.data.sum(axis=1)[None])
        np.testing.assert_array_equal(layer.weight.grad, np.zeros((3, 2)))

    def test_determinism(self):
        """Test identical seeds and op sequences give bit-identical grads"""
        grads = []
        for _ in range(2):
            layer = Linear(4, 3, np.random.default_rng(7))
            x = np.random.default_rng(8).standard_normal((5, 4))
            with Graph():
                backward(ops.sum_(ops.softplus(layer(x))), layer.parameters())
            grads.append(layer.weight.grad.copy())
        np.testing.assert_array_equal(grads[0], grads[1])


class TestGradCheck(unittest.TestCase):
    """Test the finite-difference checker"""

    def setUp(self):
        """Set up a point away from zero"""
        rng = np.random.default_rng(3)
        self.x = rng.choice([-1.0, 1.0], size=(3, 4)) * rng.uniform(0.5, 1.5, size=(3, 4))

    def test_sum_exact(self):
        """Test the checker agrees on a linear function"""
        self.assertLessEqual(grad_check(lambda t: ops.sum_(t), self.x), 1e-10)

    def test_l1_away_from_zero(self):
        """Test the piecewise-linear L1 away from its kink"""
        self.assertLessEqual(grad_check(lambda t: ops.mean(ops.abs_(t)), self.x), 1e-6)

    def test_conv3d_weight(self):
        """Test conv3d gradients with respect to the kernel"""
        rng = np.random.default_rng(4)
        x = Tensor(rng.standard_normal((1, 2, 4, 4, 4)))
        w = rng.standard_normal((3, 2, 3, 3, 3))
        error = grad_check(lambda t: ops.sum_(ops.square(conv3d(x, t, stride=2, padding=1))), w,
                           step=1e-5, max_elements=20)
        self.assertLessEqual(error, 1e-4)

    def test_detects_wrong_gradient(self):
        """Test a broken backward rule is caught"""
        from core.autodiff.tensor import as_tensor, make_result

        def broken_square(a):
            a = as_tensor(a)
            return make_result("broken", a.data ** 2, (a,), lambda g: (g * a.data,))

        self.assertGreater(grad_check(lambda t: ops.sum_(broken_square(t)), self.x), 0.1)


class TestLayersAndAdam(unittest.TestCase):
    """Test module registry, state dicts and the optimizer"""

    def setUp(self):
        """Set up a small two-layer module"""
        class Tiny(Module):
            def __init__(self, rng):
                super().__init__()
                self.fc = Linear(3, 2, rng)
                self.conv = Conv3d(1, 2, 3, rng, padding=1)

        self.model = Tiny(np.random.default_rng(0))

    def test_named_parameters(self):
        """Test parameter names follow attribute paths"""
        names = [name for name, _ in self.model.named_parameters()]
        self.assertEqual(names, ["fc.weight", "fc.bias", "conv.weight", "conv.bias"])
        self.assertEqual(self.model.parameter_count(), 3 * 2 + 2 + 2 * 27 + 2)

    def test_zero_bias_init(self):
        """Test biases start at zero"""
        np.testing.assert_array_equal(self.model.fc.bias.data, np.zeros(2))

    def test_state_dict_round_trip(self):
        """Test load_state_dict restores saved values"""
        state = self.model.state_dict()
        self.model.fc.weight.data = self.model.fc.weight.data + 1.0
        self.model.load_state_dict(state)
        np.testing.assert_array_equal(self.model.fc.weight.data, state["fc.weight"])

    def test_state_dict_shape_mismatch(self):
        """Test a mismatching entry is named in the error"""
        state = self.model.state_dict()
        state["fc.bias"] = np.zeros(5)
        with self.assertRaises(CheckpointError) as ctx:
            self.model.load_state_dict(state)
        self.assertEqual(ctx.exception.entry, "fc.bias")

    def test_transposed_conv_init_scale(self):
        """Test a k=4, stride-2 transposed conv draws weights with std 1/sqrt(8 C_in)"""
        from core.autodiff import ConvTranspose3d
        layer = ConvTranspose3d(16, 8, 4, np.random.default_rng(5), stride=2, padding=1)
        self.assertAlmostEqual(float(layer.weight.data.std()), 1.0 / np.sqrt(16 * 8), delta=0.005)

    def test_adam_first_step(self):
        """Test the bias-corrected first step moves by lr against the gradient sign"""
        p = Parameter(np.array([1.0, -1.0]))
        p.grad = np.array([0.5, -2.0])
        adam_step([p], lr=0.1, betas=(0.9, 0.999), eps=1e-8)
        np.testing.assert_allclose(p.data, [0.9, -0.9], atol=1e-6)
        self.assertEqual(p.version, 1)
        self.assertIsNone(p.grad)

    def test_adam_zero_gradient(self):
        """Test a zero gradient leaves the parameter unchanged"""
        p = Parameter(np.array([2.0, 3.0]))
        p.grad = np.zeros(2)
        adam_step([p], lr=0.1)
        np.testing.assert_array_equal(p.data, [2.0, 3.0])

    def test_adam_missing_gradient(self):
        """Test stepping without a gradient is an error"""
        with self.assertRaises(ValueError):
            Adam([Parameter(np.ones(1))], lr=0.1).step()

    def test_adam_descends_quadratic(self):
        """Test |x| shrinks every step on x^2 while far from the minimum"""
        x = Parameter(np.array(5.0))
        optimizer = Adam([x], lr=0.1)
        history = [5.0]
        for _ in range(30):
            with Graph():
                backward(ops.square(x), [x])
            optimizer.step()
            history.append(abs(float(x.data)))
        self.assertTrue(all(b < a for a, b in zip(history, history[1:])))


if __name__ == '__main__':
    unittest.main()
