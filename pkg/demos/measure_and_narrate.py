"""Measure a synthetic cardiac cycle and print its explanation texts.

Run from the repository root:  python3 demos/measure_and_narrate.py [seed]
"""
import json
import sys

from echoexplain import geometry, narrative
from echoexplain.contour_io import CardiacCycle
from echoexplain.synthetic import ellipse_frame


def main(seed: int = 0) -> None:
    # ED ellipse; ES shorter, narrower and a little lower, as a contracting ventricle would look
    ed = ellipse_frame(45, 20, frame_index=12)
    es = ellipse_frame(40, 15, center=(56.0, 58.0), frame_index=31)
    cycle = CardiacCycle("0XDEMO", ed, es)

    vec = geometry.compute_attribute_vector(cycle)
    print(f"EF {vec.ef:.1f}%  (EDV {vec.edv:.0f} px^3, ESV {vec.esv:.0f} px^3)")
    print(f"bulge score {vec.bulge_score:.0f} ({vec.bulge_class}), L/W {vec.length_width_ratio:.2f}, "
          f"apex motion {vec.apex_percent:.2f}%")
    print("segments:", ", ".join(vec.segment_labels))

    bundle = narrative.make_bundle(vec, narrative.load_registry(), seed=seed)
    print("\nbasic sentences:\n ", bundle.basic_text)
    print("\nelaborated explanation:\n ", bundle.elaborated_text)
    print("\nrefinement prompt:")
    print(json.dumps(bundle.refinement_prompt.to_dict(), indent=2))


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
