"""Draws the synthetic micrographs used by the recorded vision fixtures.

The images only need to be stable byte strings for transcript keys; they are
rough sketches of the morphologies named in the recordings.
"""

from pathlib import Path

from PIL import Image, ImageDraw

OUT = Path(__file__).resolve().parent.parent / "fixtures" / "images"


def lack_of_fusion() -> Image.Image:
    img = Image.new("L", (160, 120), 170)
    d = ImageDraw.Draw(img)
    for y in range(20, 120, 25):
        d.line([(0, y), (160, y)], fill=150)
    d.polygon([(30, 40), (70, 36), (82, 48), (60, 56), (26, 52)], fill=30)
    d.polygon([(95, 66), (140, 62), (130, 74), (100, 76)], fill=30)
    for cx, cy in [(45, 46), (112, 69)]:
        d.ellipse([cx - 3, cy - 3, cx + 3, cy + 3], fill=200)
    d.ellipse([20, 95, 24, 99], fill=40)
    return img


def keyhole() -> Image.Image:
    img = Image.new("L", (160, 120), 175)
    d = ImageDraw.Draw(img)
    d.polygon([(74, 0), (88, 0), (84, 60), (80, 92), (77, 60)], fill=25)
    for cx, cy, r in [(30, 70, 4), (120, 50, 5), (110, 95, 3), (45, 100, 4)]:
        d.ellipse([cx - r, cy - r + 1, cx + r, cy + r], fill=35)
    return img


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    lack_of_fusion().save(OUT / "lof_micrograph.png", optimize=False)
    keyhole().save(OUT / "defect_3.png", optimize=False)


if __name__ == "__main__":
    main()
