"""Widget detection quality on rendered screens, portrait and landscape.

Reports precision, recall and F1 at a range of IoU thresholds, plus the
widget-type classifier accuracy against the renderer's labels.
"""

import argparse
import json
from collections import Counter

from screenrl.embedding import WIDGET_TYPES, classify_widget_type
from screenrl.simenv import generate_app, ground_truth, render
from screenrl.vision import canny_edges, detection_counts, extract_widget_boxes, f1_score


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--apps", type=int, default=10)
    p.add_argument("--per-app", type=int, default=10)
    p.add_argument("--iou", type=float, nargs="+", default=[0.5, 0.7, 0.8, 0.9])
    a = p.parse_args()

    results = {}
    confusion = Counter()
    for orient in ("portrait", "landscape"):
        counts = {t: [0, 0, 0] for t in a.iou}
        for seed in range(1, a.apps + 1):
            app = generate_app(seed)
            w, h = (app.width, app.height) if orient == "portrait" else (app.height, app.width)
            for s in app.screens[:a.per_app]:
                img = render(app, s.id, w, h)
                truth = ground_truth(app, s.id, w, h)
                found = extract_widget_boxes(canny_edges(img))
                for t in a.iou:
                    c = detection_counts(found, [b for b, _ in truth], t)
                    counts[t] = [x + y for x, y in zip(counts[t], c)]
                if orient == "portrait":
                    for box, name in truth:
                        confusion[(name, WIDGET_TYPES[classify_widget_type(img, box)[0]])] += 1
        results[orient] = {str(t): dict(zip(("precision", "recall", "f1"), f1_score(*counts[t]))) for t in a.iou}

    total = sum(confusion.values())
    right = sum(v for (t, g), v in confusion.items() if t == g)
    results["classifier_accuracy"] = right / total
    results["classifier_errors"] = {f"{t}->{g}": v for (t, g), v in sorted(confusion.items()) if t != g}
    print(json.dumps(results, indent=1))


if __name__ == "__main__":
    main()
