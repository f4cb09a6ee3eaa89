"""Exercises the Python bindings end to end on a tiny problem."""

import os
import sys
import tempfile

import patchstyle as ps


def main():
    sketch = ps.draw_sketch(96, 96, 5)
    assert sketch.width == 96 and sketch.ink_count() > 100
    assert ps.stylize(sketch) == sketch, "identity stylization changed the sketch"

    styled = ps.synth_style(sketch, "stripes:4:0:2")
    data = ps.mine([(sketch, styled)], patch_size=16, rotation_step=90, stride=8)
    assert len(data) > 0 and data.patch_size == 16

    model, trace = ps.train(
        data, iterations=3, batch_size=2, seed=9, generator="4,1,1", discriminator="4,8", delta=2
    )
    assert len(trace) == 3 and set(trace[0]) >= {"l1", "adv_g", "shape"}
    out = ps.stylize(sketch, model, patch_size=16, overlap=4, root="random:1")
    again = ps.stylize(sketch, model, patch_size=16, overlap=4, root="random:1")
    assert out == again, "stylization is not reproducible"
    print("seam metric:", ps.seam_metric(out, 16, 4))

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "m.bin")
        model.save(path)
        assert ps.Model.load(path).to_bytes() == model.to_bytes()
        out.save(os.path.join(d, "out.png"))
        back = ps.Image.load(os.path.join(d, "out.png"))
        assert back.mean_abs_diff(out) <= 0.5 / 255 + 1e-12, "PNG round trip drifted past 8-bit quantization"

    try:
        ps.mine([(sketch, ps.Image.filled(90, 96, 1.0))], patch_size=16)
    except ps.PatchstyleError as e:
        assert str(e).startswith("alignment"), e
    else:
        raise AssertionError("misaligned exemplars were accepted")

    worst = max(err for _, _, err in ps.gradcheck(11))
    assert worst < 1e-3, worst
    print(f"gradcheck max relative error {worst:.2e}")
    print("smoke test ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
