"""Regenerates the annotated face mini-corpus.

Faces come from the LFW subset and the astronaut image bundled with
scikit-image. Each face is resized and pasted onto a textured background,
then annotated by running OpenCV's CascadeClassifier with
haarcascade_frontalface_alt2, scale factor 1.3 and min neighbors 3. Only
images where the reference detector reports exactly one face are kept.

Usage: python generate.py <path to haarcascade_frontalface_alt2.xml>
"""
import os
import sys

import cv2
import numpy as np
import skimage.data

HERE = os.path.dirname(os.path.abspath(__file__))
CORPUS_SIZE = 24


def background(rng, h, w):
    yy, xx = np.mgrid[0:h, 0:w]
    base = 90 + 60 * np.sin(xx / rng.uniform(15, 40)) * np.cos(yy / rng.uniform(15, 40))
    noise = rng.normal(0, 12, (h, w))
    return np.clip(base + noise, 0, 255).astype(np.uint8)


def main():
    cascade = cv2.CascadeClassifier(sys.argv[1])
    rng = np.random.default_rng(20140101)
    lfw = np.load(os.path.join(os.path.dirname(skimage.data.__file__), "lfw_subset.npy"))
    rows = []
    idx = 0
    for i in range(100):
        if len(rows) >= CORPUS_SIZE - 1:
            break
        face = (lfw[i] * 255).astype(np.uint8)
        side = int(rng.integers(70, 150))
        h, w = int(rng.integers(side + 20, side + 120)), int(rng.integers(side + 20, side + 160))
        img = background(rng, h, w)
        y0, x0 = int(rng.integers(0, h - side)), int(rng.integers(0, w - side))
        img[y0:y0 + side, x0:x0 + side] = cv2.resize(face, (side, side), interpolation=cv2.INTER_CUBIC)
        found = cascade.detectMultiScale(img, 1.3, 3)
        if len(found) != 1:
            continue
        name = "face_%02d.png" % idx
        idx += 1
        cv2.imwrite(os.path.join(HERE, name), img)
        x, y, fw, fh = found[0]
        rows.append((name, x, y, fw))

    astro = cv2.cvtColor(skimage.data.astronaut(), cv2.COLOR_RGB2GRAY)[20:300, 120:340]
    found = cascade.detectMultiScale(astro, 1.3, 3)
    assert len(found) == 1
    cv2.imwrite(os.path.join(HERE, "face_astronaut.png"), astro)
    x, y, fw, fh = found[0]
    rows.append(("face_astronaut.png", x, y, fw))

    with open(os.path.join(HERE, "annotations.csv"), "w") as out:
        out.write("file,x,y,side\n")
        for r in rows:
            out.write("%s,%d,%d,%d\n" % r)

    # 640x480 webcam-sized frame with a face larger than 150 pixels.
    frame = background(rng, 480, 640)
    big = cv2.resize(astro, (440, 560), interpolation=cv2.INTER_LINEAR)[40:460, :]
    frame[30:450, 100:540] = big
    found = cascade.detectMultiScale(frame, 1.3, 3, minSize=(150, 150))
    assert len(found) == 1, found
    cv2.imwrite(os.path.join(HERE, "webcam_frame.png"), frame)
    with open(os.path.join(HERE, "webcam_frame.txt"), "w") as out:
        x, y, fw, fh = found[0]
        out.write("%d %d %d\n" % (x, y, fw))

    blank = np.full((240, 320), 127, np.uint8)
    assert len(cascade.detectMultiScale(blank, 1.3, 3)) == 0
    cv2.imwrite(os.path.join(HERE, "blank.png"), blank)


if __name__ == "__main__":
    main()
