import math
import unittest

import numpy as np

from app.core import autograd, ops
from app.core.autograd import Variable, backprop
from app.core.container import decode_tensor, encode_tensor
from app.core.convSpec import ConvSpec
from app.core.gradcheck import grad_check
from app.core.opRegistry import OP_REGISTRY, backward, get_op
from app.core.opTask import OpTask
from app.errors import ConfigError, FormatError, NonFiniteError, ShapeError, UnregisteredOpError

SEEDS = range(20)


def away_from_zero(rng, shape):
    return rng.choice([-1.0, 1.0], size=shape) * rng.uniform(0.1, 1.0, size=shape)


def conv_oracle(x, w, b, spec):
    """Direct loop over output positions, kernel offsets and channels."""
    pt, ph, pw = spec.padding
    st, sh, sw = spec.stride
    kt, kh, kw = spec.kernel
    padded = np.pad(x, ((pt, pt), (ph, ph), (pw, pw), (0, 0)))
    out = np.zeros((*spec.output_extents(x.shape[:3]), spec.out_channels))
    for t in range(out.shape[0]):
        for i in range(out.shape[1]):
            for j in range(out.shape[2]):
                for co in range(spec.out_channels):
                    total = b[co]
                    for a in range(kt):
                        for c in range(kh):
                            for d in range(kw):
                                for ci in range(spec.in_channels):
                                    total += padded[t * st + a, i * sh + c, j * sw + d, ci] * w[a, c, d, ci, co]
                    out[t, i, j, co] = total
    return out


class TestConvolution(unittest.TestCase):
    def test_identity_kernel(self):
        spec = ConvSpec(kernel=(1, 1, 1), in_channels=3, out_channels=3)
        x = np.random.default_rng(0).standard_normal((2, 4, 5, 3))
        w = np.eye(3).reshape(1, 1, 1, 3, 3)
        np.testing.assert_array_equal(ops.conv3d(x, w, np.zeros(3), spec), x)

    def test_constant_input_box_filter(self):
        spec = ConvSpec(kernel=(1, 3, 3), in_channels=1, out_channels=1, padding=(0, 1, 1))
        c = 0.7
        out = ops.conv3d(np.full((1, 4, 4, 1), c), np.ones((1, 3, 3, 1, 1)), np.zeros(1), spec)[0, :, :, 0]
        np.testing.assert_allclose(out[1:3, 1:3], 9 * c)
        for corner in [(0, 0), (0, 3), (3, 0), (3, 3)]:
            self.assertAlmostEqual(out[corner], 4 * c)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(1)
        spec = ConvSpec(kernel=(1, 3, 3), in_channels=1, out_channels=1)
        x = rng.standard_normal((2, 3, 3, 1))
        w = rng.standard_normal(spec.weight_shape)
        b = rng.standard_normal(1)
        np.testing.assert_allclose(ops.conv3d(x, w, b, spec), conv_oracle(x, w, b, spec), rtol=1e-12, atol=1e-12)

    def test_strided_padded_matches_loop_oracle(self):
        rng = np.random.default_rng(2)
        spec = ConvSpec(kernel=(3, 3, 3), in_channels=2, out_channels=3, stride=(1, 2, 2), padding=(1, 1, 1))
        x = rng.standard_normal((3, 5, 6, 2))
        w = rng.standard_normal(spec.weight_shape)
        b = rng.standard_normal(3)
        out = ops.conv3d(x, w, b, spec)
        self.assertEqual(out.shape, (3, 3, 3, 3))
        np.testing.assert_allclose(out, conv_oracle(x, w, b, spec), rtol=1e-12, atol=1e-12)

    def test_channel_mismatch_rejected(self):
        spec = ConvSpec(kernel=(1, 1, 1), in_channels=2, out_channels=1)
        with self.assertRaises(ShapeError):
            ops.conv3d(np.zeros((1, 2, 2, 3)), np.zeros(spec.weight_shape), np.zeros(1), spec)

    def test_padding_must_be_below_kernel(self):
        with self.assertRaises(ValueError):
            ConvSpec(kernel=(1, 3, 3), in_channels=1, out_channels=1, padding=(1, 1, 1))

    def test_transposed_identity_kernel(self):
        spec = ConvSpec(kernel=(1, 1, 1), in_channels=2, out_channels=2)
        y = np.random.default_rng(3).standard_normal((2, 3, 3, 2))
        np.testing.assert_array_equal(ops.transposed_conv3d(y, np.eye(2).reshape(1, 1, 1, 2, 2), np.zeros(2), spec), y)

    def test_adjoint_identity(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            spec = ConvSpec(
                kernel=(3, 3, 3),
                in_channels=2,
                out_channels=3,
                stride=(1, 2, 2),
                padding=(1, 1, 1),
                output_padding=(0, 1, 1),
            )
            x = rng.standard_normal((2, 4, 4, 2))
            w = rng.standard_normal(spec.weight_shape)
            y = rng.standard_normal(ops.conv3d(x, w, np.zeros(3), spec).shape)
            back = ops.transposed_conv3d(y, w, np.zeros(2), spec)
            self.assertEqual(back.shape, x.shape)
            lhs = float(np.sum(ops.conv3d(x, w, np.zeros(3), spec) * y))
            rhs = float(np.sum(x * back))
            self.assertLess(abs(lhs - rhs), 1e-10)

    def test_transposed_upsampling_doubles_extents(self):
        spec = ConvSpec(
            kernel=(1, 3, 3), in_channels=4, out_channels=4, stride=(1, 2, 2), padding=(0, 1, 1), output_padding=(0, 1, 1)
        )
        y = np.ones((1, 2, 2, 4))
        out = ops.transposed_conv3d(y, np.ones(spec.weight_shape), np.zeros(4), spec)
        self.assertEqual(out.shape, (1, 4, 4, 4))
        self.assertEqual(spec.transposed_output_extents((1, 2, 2)), (1, 4, 4))


class TestElementwise(unittest.TestCase):
    def test_leaky_relu(self):
        out = ops.leaky_relu(np.array([0.0, -1.0, 2.5]), 0.1)
        np.testing.assert_allclose(out, [0.0, -0.1, 2.5])

    def test_softmax_values(self):
        np.testing.assert_allclose(ops.softmax(np.array([0.0, 0.0])), [0.5, 0.5])
        np.testing.assert_array_equal(ops.softmax(np.array([3.0])), [1.0])
        e = math.e
        np.testing.assert_allclose(ops.softmax(np.array([1.0, 0.0])), [e / (e + 1), 1 / (e + 1)], rtol=1e-15)

    def test_softmax_rows_and_shift_invariance(self):
        x = np.random.default_rng(4).standard_normal((5, 7)) * 10
        out = ops.softmax(x, axis=-1)
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-6)
        np.testing.assert_allclose(ops.softmax(x + 123.0, axis=-1), out, atol=1e-6)
        np.testing.assert_allclose(ops.softmax(x, axis=0).sum(axis=0), 1.0, atol=1e-6)

    def test_linear(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((3, 2))
        np.testing.assert_allclose(ops.linear(x, np.eye(2)), x)
        np.testing.assert_array_equal(ops.linear(x, np.zeros((2, 4))), np.zeros((3, 4)))
        w = rng.standard_normal((2, 4))
        oracle = np.zeros((3, 4))
        for i in range(3):
            for j in range(4):
                for k in range(2):
                    oracle[i, j] += x[i, k] * w[k, j]
        np.testing.assert_allclose(ops.linear(x, w), oracle, rtol=1e-12)
        with self.assertRaises(ShapeError):
            ops.linear(x, np.zeros((3, 3)))

    def test_ops_are_pure(self):
        rng = np.random.default_rng(6)
        spec = ConvSpec.same((3, 3, 3), 2, 2)
        x = rng.standard_normal((2, 4, 4, 2))
        w = rng.standard_normal(spec.weight_shape)
        first = ops.conv3d(x, w, np.zeros(2), spec)
        np.testing.assert_array_equal(first, ops.conv3d(x.copy(), w.copy(), np.zeros(2), spec))

    def test_rearrange_does_not_alias_its_input(self):
        x = np.random.default_rng(9).standard_normal((2, 3, 4, 2))
        out = ops.rearrange(x, "t h w c -> (t h) w c", {"t": 2})
        self.assertFalse(np.shares_memory(out, x))
        x[0, 0, 0, 0] = 999.0
        self.assertNotEqual(out[0, 0, 0], 999.0)
        (g,) = ops.rearrange_vjp(out, out, x, "t h w c -> (t h) w c", {"t": 2})
        self.assertFalse(np.shares_memory(g, out))


class TestBackward(unittest.TestCase):
    def test_leaky_relu_grad_passes_upstream(self):
        (g,) = backward(OpTask.LEAKY_RELU, (np.array([2.0]),), np.array([3.5]), slope=0.1)
        np.testing.assert_array_equal(g, [3.5])

    def test_softmax_grad_of_constant_upstream_is_zero(self):
        x = np.random.default_rng(7).standard_normal(6)
        (g,) = backward("softmax", (x,), np.full(6, 2.0), axis=-1)
        np.testing.assert_allclose(g, 0.0, atol=1e-15)

    def test_unregistered_op_rejected(self):
        with self.assertRaises(UnregisteredOpError):
            backward("fft", (np.zeros(2),), np.zeros(2))
        with self.assertRaises(UnregisteredOpError):
            get_op("fft")

    def test_upstream_shape_checked(self):
        with self.assertRaises(ShapeError):
            backward(OpTask.IDENTITY, (np.zeros(3),), np.zeros(4))

    def test_conv_weight_grad_matches_differences(self):
        rng = np.random.default_rng(8)
        spec = ConvSpec.same((3, 3, 3), 2, 2)
        point = [rng.standard_normal((2, 3, 3, 2)), rng.standard_normal(spec.weight_shape), rng.standard_normal(2)]
        report = grad_check(OpTask.CONV3D, point, attrs={"spec": spec}, wrt=[1], tolerance=1e-5)
        self.assertTrue(report.passed, report)

    def test_tape_accumulates_shared_inputs(self):
        x = Variable(np.array([1.0, 2.0]), requires_grad=True)
        y = autograd.add(x, autograd.scale(x, 3.0))
        backprop(y)
        np.testing.assert_array_equal(x.grad, [4.0, 4.0])

    def test_constants_get_no_grad(self):
        x = Variable(np.ones(3), requires_grad=True)
        c = Variable(np.ones(3))
        backprop(autograd.add(x, c))
        self.assertIsNone(c.grad)
        np.testing.assert_array_equal(x.grad, np.ones(3))

    def test_non_finite_output_raises(self):
        with self.assertRaises(NonFiniteError):
            autograd.scale(np.array([1e308]), 10.0)


class TestGradCheck(unittest.TestCase):
    def _points(self, task, rng):
        """(point, attrs, tolerance, epsilon) for one registered op."""
        if task == OpTask.CONV3D:
            spec = ConvSpec.same((3, 3, 3), 2, 3)
            return [rng.standard_normal((2, 4, 4, 2)), rng.standard_normal(spec.weight_shape), rng.standard_normal(3)], {
                "spec": spec
            }, 1e-6, 1e-4
        if task == OpTask.TRANSPOSED_CONV3D:
            spec = ConvSpec(
                kernel=(1, 3, 3), in_channels=2, out_channels=3, stride=(1, 2, 2), padding=(0, 1, 1), output_padding=(0, 1, 1)
            )
            return [rng.standard_normal((2, 2, 2, 3)), rng.standard_normal(spec.weight_shape), rng.standard_normal(2)], {
                "spec": spec
            }, 1e-6, 1e-4
        if task == OpTask.LEAKY_RELU:
            return [away_from_zero(rng, (4, 5))], {"slope": 0.1}, 1e-6, 1e-4
        if task == OpTask.SOFTMAX:
            return [rng.standard_normal((3, 4))], {"axis": -1}, 1e-6, 1e-5
        if task == OpTask.LINEAR:
            return [rng.standard_normal((3, 4)), rng.standard_normal((4, 2))], {}, 1e-6, 1e-4
        if task == OpTask.MATMUL:
            return [rng.standard_normal((2, 3, 4)), rng.standard_normal((2, 4, 5))], {}, 1e-6, 1e-4
        if task == OpTask.ADD:
            return [rng.standard_normal((3, 4)), rng.standard_normal(4)], {}, 1e-6, 1e-4
        if task == OpTask.SCALE:
            return [rng.standard_normal((3, 4))], {"factor": 2.5}, 1e-6, 1e-4
        if task == OpTask.LAYER_NORM:
            return [rng.standard_normal((3, 5)), rng.standard_normal(5), rng.standard_normal(5)], {"eps": 1e-5}, 1e-6, 1e-5
        if task == OpTask.REARRANGE:
            return [rng.standard_normal((2, 3, 4, 2))], {"pattern": "t h w c -> (t h) w c", "axes": {"t": 2}}, 1e-6, 1e-4
        if task == OpTask.CONCAT:
            return [rng.standard_normal((3, 2)), rng.standard_normal((3, 4))], {"axis": -1}, 1e-6, 1e-4
        if task == OpTask.SLICE:
            return [rng.standard_normal((3, 5))], {"axis": -1, "start": 1, "stop": 3}, 1e-6, 1e-4
        if task == OpTask.MSE:
            return [rng.standard_normal((3, 4)), rng.standard_normal((3, 4))], {}, 1e-6, 1e-4
        return [rng.standard_normal((3, 4))], {}, 1e-6, 1e-4

    def test_every_registered_op_in_64_bit(self):
        for task in OP_REGISTRY:
            for seed in SEEDS:
                rng = np.random.default_rng(seed)
                point, attrs, tolerance, epsilon = self._points(task, rng)
                report = grad_check(task, point, epsilon=epsilon, tolerance=tolerance, attrs=attrs, max_coords=20, seed=seed)
                self.assertTrue(report.passed, f"{task.value} seed {seed}: {report}")

    def test_every_registered_op_in_32_bit(self):
        for task in OP_REGISTRY:
            for seed in SEEDS:
                rng = np.random.default_rng(seed)
                point, attrs, _, epsilon = self._points(task, rng)
                point = [p.astype(np.float32) for p in point]
                report = grad_check(task, point, epsilon=epsilon, tolerance=1e-4, attrs=attrs, max_coords=20, seed=seed)
                self.assertTrue(report.passed, f"{task.value} seed {seed}: {report}")

    def test_32_bit_path(self):
        x = away_from_zero(np.random.default_rng(0), (4, 4)).astype(np.float32)
        report = grad_check(OpTask.LEAKY_RELU, [x], attrs={"slope": 0.2}, tolerance=1e-4)
        self.assertTrue(report.passed, report)

    def test_linear_layer(self):
        rng = np.random.default_rng(11)
        report = grad_check(OpTask.LINEAR, [rng.standard_normal((4, 3)), rng.standard_normal((3, 2))], tolerance=1e-6)
        self.assertTrue(report.passed)
        self.assertLessEqual(report.max_relative_error, 1e-6)
        self.assertEqual(report.checked_coordinates, 12 + 6)

    def test_identity_op(self):
        report = grad_check(OpTask.IDENTITY, [np.random.default_rng(12).standard_normal(6)])
        self.assertLess(report.max_relative_error, 1e-10)

    def test_corrupted_backward_is_caught(self):
        rng = np.random.default_rng(13)

        def corrupted(g, out, x, w):
            gx, gw = ops.linear_vjp(g, out, x, w)
            gw = gw.copy()
            gw[0, 0] *= 1.1
            return gx, gw

        report = grad_check(
            OpTask.LINEAR, [rng.standard_normal((4, 3)), rng.standard_normal((3, 2))], backward_override=corrupted
        )
        self.assertFalse(report.passed)
        self.assertIn("input 1", report.worst_location)

    def test_composite_callable(self):
        rng = np.random.default_rng(14)
        target = rng.standard_normal((3, 2))

        def loss(x, w):
            return autograd.mse(autograd.linear(x, w), target)

        report = grad_check(loss, [rng.standard_normal((3, 4)), rng.standard_normal((4, 2))], tolerance=1e-6)
        self.assertTrue(report.passed, report)

    def test_non_finite_reported_as_failure(self):
        report = grad_check(OpTask.SCALE, [np.array([1e308, 1.0])], attrs={"factor": 10.0})
        self.assertFalse(report.passed)
        self.assertIn("forward", report.failure)

    def test_epsilon_range(self):
        with self.assertRaises(ConfigError):
            grad_check(OpTask.IDENTITY, [np.zeros(2)], epsilon=1e-2)


class TestContainer(unittest.TestCase):
    def test_round_trip_is_bit_exact(self):
        rng = np.random.default_rng(15)
        for array in [
            rng.standard_normal((2, 3, 4)).astype(np.float32),
            rng.standard_normal((5,)),
            rng.integers(0, 256, size=(3, 3), dtype=np.uint8),
            rng.integers(0, 4096, size=(2, 2), dtype=np.uint16),
        ]:
            back = decode_tensor(encode_tensor(array))
            self.assertEqual(back.dtype, array.dtype)
            self.assertEqual(back.tobytes(), array.tobytes())

    def test_header_layout(self):
        data = encode_tensor(np.zeros((8, 64, 64), dtype=np.float32))
        self.assertEqual(data[:4], b"STNS")
        self.assertIn(b"dtype=f32;shape=8,64,64", data)

    def test_truncated_payload(self):
        data = encode_tensor(np.ones((4, 4)))
        with self.assertRaises(FormatError) as ctx:
            decode_tensor(data[:-3])
        self.assertGreater(ctx.exception.offset, 8)

    def test_bad_magic_and_trailing_bytes(self):
        data = encode_tensor(np.ones(3, dtype=np.float32))
        with self.assertRaises(FormatError):
            decode_tensor(b"XXXX" + data[4:])
        with self.assertRaises(FormatError):
            decode_tensor(data + b"\x00")

    def test_unsupported_dtype(self):
        with self.assertRaises(FormatError):
            encode_tensor(np.zeros(2, dtype=np.complex64))


if __name__ == "__main__":
    unittest.main()
