"""Regenerate the bundled golden artifacts (tests/golden/).

The source image is a deterministic procedural scene; the golden output is
the reference (exact per-pixel) radial blur with the default profile and a
center fixation. Rerunning this script must be a no-op unless the blur
implementation intentionally changed.
"""

import sys
import time
from pathlib import Path

from fovsim.corpus import make_image
from fovsim.imagekit import center_fixation, decode_png, encode_png
from fovsim.radialblur import default_profile, radial_blur

GOLDEN = Path(__file__).resolve().parent.parent / "tests" / "golden"


def main() -> int:
    GOLDEN.mkdir(parents=True, exist_ok=True)
    # round-trip the source through the codec first so the golden is
    # reproducible from the bundled PNG alone
    src_png = encode_png(make_image([2024, 512], size=512))
    (GOLDEN / "scene512.png").write_bytes(src_png)
    src = decode_png(src_png)
    fix = center_fixation(512, 512)  # fovea radius 64
    profile = default_profile(512, 512, fix, sigma_max=4.0)
    t0 = time.perf_counter()
    blurred = radial_blur(src, fix, profile)
    print(f"reference blur at 512x512: {time.perf_counter() - t0:.1f}s")
    (GOLDEN / "scene512_blur_center.png").write_bytes(encode_png(blurred))
    print(f"wrote {GOLDEN}/scene512.png and scene512_blur_center.png")
    return 0


if __name__ == "__main__":
    sys.exit(main())
