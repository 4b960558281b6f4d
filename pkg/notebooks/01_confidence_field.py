"""
The truncated Gaussian confidence field
=======================================

How much credit a click earns, and how that credit turns into a reward for
the confidence the policy states.
"""
import numpy as np

from clickcal import BBox, Point, build_field, confidence_reward, total_reward, truncated_confidence
from clickcal.codec import emit_prediction

# A 40 x 20 button. The field peaks at the centre and is zero on and beyond
# the border; sigma scales with each side, so wide boxes are forgiving along x.
box = BBox(0, 0, 40, 20)
fld = build_field(box, alpha=0.25)
print("sigma:", fld.sigma_x, fld.sigma_y)

for x in (20, 25, 30, 35, 39.9, 40):
    print(f"x={x:5}  C={truncated_confidence(fld, Point(x, 10)):.4f}")

# The confidence reward is a negated squared error against the field value,
# so the stated confidence that earns full marks is the field value itself.
p = Point(30, 10)
cbar = truncated_confidence(fld, p)
grid = np.linspace(0, 1, 11)
print("C at click:", round(cbar, 4))
print("reward by stated confidence:", np.round([confidence_reward(float(c), fld, p) for c in grid], 3))

# Total reward on three outputs: a perfect centre click, text that fails to
# parse, and a confident miss.
for text in (emit_prediction(Point(20, 10), 1.0), "click the button",
             emit_prediction(Point(60, 10), 0.9)):
    print(f"{text!r:58} -> {total_reward(text, box, 0.25).as_tuple()}")

# alpha = 0 collapses the field to an indicator: the binary confidence reward.
print(total_reward(emit_prediction(p, 1.0), box, alpha=0.0).as_tuple())
