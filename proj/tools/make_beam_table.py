#!/usr/bin/env python3
# SPDX-FileCopyrightText: Copyright (c) 2026 The echotrace Authors. All rights reserved.
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
# http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Write a beam-profile table for `beam: {"kind": "table"}` run configs.

Either generate a focused Gaussian beam, or wrap a gain array computed elsewhere
(for example a field simulation exported with numpy.save) in the table format.

    make_beam_table.py focused out.json --sigma-l 0.6 --sigma-e 1.0 --focus 50 --dof 40
    make_beam_table.py import out.json gains.npy --depths 0:140:1 --lateral -3:3:0.1 --elevation -4:4:0.2
"""

import argparse
import json
import pathlib
import sys

import numpy as np


def axis(text):
    """start:stop:step in mm, stop inclusive."""
    try:
        start, stop, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected start:stop:step, got {text!r}")
    if step <= 0 or stop <= start:
        raise argparse.ArgumentTypeError(f"empty axis {text!r}")
    n = int(round((stop - start) / step)) + 1
    return start + step * np.arange(n)


def focused(depths, laterals, elevations, sigma_l, sigma_e, focus, dof):
    s = np.sqrt(1.0 + ((depths - focus) / dof) ** 2)[:, None, None]
    dl = laterals[None, :, None]
    de = elevations[None, None, :]
    return np.exp(-0.5 * ((dl / (sigma_l * s)) ** 2 + (de / (sigma_e * s)) ** 2)) / s


def write_table(path, depths, laterals, elevations, gains):
    path = pathlib.Path(path)
    gains = np.asarray(gains, dtype="<f4")
    expected = (len(depths), len(laterals), len(elevations))
    if gains.shape != expected:
        sys.exit(f"gain array has shape {gains.shape}, axes give {expected}")
    if not np.all(np.isfinite(gains)) or gains.min() < 0:
        sys.exit("gains must be finite and non-negative")
    payload = path.with_suffix(".raw")
    header = {
        "radial_depths_mm": [float(v) for v in depths],
        "lateral_offsets_mm": [float(v) for v in laterals],
        "elevational_offsets_mm": [float(v) for v in elevations],
        "dtype": "f32",
        "data": payload.name,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(header, indent=2) + "\n")
    gains.tofile(payload)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="mode", required=True)

    f = sub.add_parser("focused", help="Gaussian beam narrowing towards a focus")
    f.add_argument("out")
    f.add_argument("--sigma-l", type=float, default=0.6, help="lateral sigma at the focus, mm")
    f.add_argument("--sigma-e", type=float, default=1.0, help="elevational sigma at the focus, mm")
    f.add_argument("--focus", type=float, default=50.0, help="focal depth, mm")
    f.add_argument("--dof", type=float, default=40.0, help="depth over which the width grows by sqrt(2), mm")
    f.add_argument("--depths", type=axis, default=axis("0:160:1"))
    f.add_argument("--lateral", type=axis, default=None)
    f.add_argument("--elevation", type=axis, default=None)

    i = sub.add_parser("import", help="wrap a (depth, lateral, elevation) .npy gain array")
    i.add_argument("out")
    i.add_argument("gains")
    i.add_argument("--depths", type=axis, required=True)
    i.add_argument("--lateral", type=axis, required=True)
    i.add_argument("--elevation", type=axis, required=True)

    args = ap.parse_args(argv)
    if args.mode == "focused":
        s_max = np.sqrt(1.0 + (max(abs(args.depths[0] - args.focus), abs(args.depths[-1] - args.focus)) / args.dof) ** 2)
        lat = args.lateral
        if lat is None:
            reach = 3.0 * args.sigma_l * s_max
            lat = axis(f"{-reach}:{reach}:{args.sigma_l / 4}")
        ele = args.elevation
        if ele is None:
            reach = 3.0 * args.sigma_e * s_max
            ele = axis(f"{-reach}:{reach}:{args.sigma_e / 4}")
        gains = focused(args.depths, lat, ele, args.sigma_l, args.sigma_e, args.focus, args.dof)
        write_table(args.out, args.depths, lat, ele, gains)
    else:
        write_table(args.out, args.depths, args.lateral, args.elevation, np.load(args.gains))
    return 0


if __name__ == "__main__":
    sys.exit(main())
