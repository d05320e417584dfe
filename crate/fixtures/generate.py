#!/usr/bin/env python3
"""Regenerates the bundled scenes and scenario scripts.

Run from the repository root: python3 fixtures/generate.py
"""
import hashlib
import json
import math
import os

HERE = os.path.dirname(os.path.abspath(__file__))


def box(c, h):
    cx, cy, cz = c
    hx, hy, hz = h
    v = [(cx + sx * hx, cy + sy * hy, cz + sz * hz) for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]
    # vertex index = 4*ix + 2*iy + iz; faces wound counter-clockwise seen from outside
    quads = [
        (4, 6, 7, 5),  # +x
        (0, 1, 3, 2),  # -x
        (2, 3, 7, 6),  # +y
        (0, 4, 5, 1),  # -y
        (1, 5, 7, 3),  # +z
        (0, 2, 6, 4),  # -z
    ]
    tris = []
    for a, b, cc, d in quads:
        tris.append([v[a], v[b], v[cc]])
        tris.append([v[a], v[cc], v[d]])
    return tris


def prism(base, radius, height, sides=10):
    """Upright n-gon prism standing on `base`."""
    bx, by, bz = base
    ring = [(bx + radius * math.cos(2 * math.pi * i / sides), bz - radius * math.sin(2 * math.pi * i / sides)) for i in range(sides)]
    lo, hi = by, by + height
    tris = []
    for i in range(sides):
        (x0, z0), (x1, z1) = ring[i], ring[(i + 1) % sides]
        tris.append([(x0, lo, z0), (x1, lo, z1), (x1, hi, z1)])
        tris.append([(x0, lo, z0), (x1, hi, z1), (x0, hi, z0)])
        tris.append([(bx, hi, bz), (x0, hi, z0), (x1, hi, z1)])
        tris.append([(bx, lo, bz), (x1, lo, z1), (x0, lo, z0)])
    return tris


def rounded(tris):
    return [[[round(c, 6) for c in p] for p in t] for t in tris]


def obj(id_, name, color, selectable, tris):
    return {"id": id_, "name": name, "color": list(color), "selectable": selectable, "triangles": rounded(tris)}


def room(half_x, half_z, height, wall_color, floor_color):
    t = 0.05
    return [
        obj("floor", "Floor", floor_color, False, box((0, -t, 0), (half_x + 2 * t, t, half_z + 2 * t))),
        obj("wall_north", "North wall", wall_color, False, box((0, height / 2, -half_z - t), (half_x + 2 * t, height / 2, t))),
        obj("wall_south", "South wall", wall_color, False, box((0, height / 2, half_z + t), (half_x + 2 * t, height / 2, t))),
        obj("wall_west", "West wall", wall_color, False, box((-half_x - t, height / 2, 0), (t, height / 2, half_z))),
        obj("wall_east", "East wall", wall_color, False, box((half_x + t, height / 2, 0), (t, height / 2, half_z))),
    ]


def quat_yaw(yaw):
    """Rotation about +Y as [w, x, y, z]."""
    return [math.cos(yaw / 2), 0.0, math.sin(yaw / 2), 0.0]


def pose(pos, yaw=0.0):
    return {"pos": [round(c, 6) for c in pos], "quat": [round(c, 9) for c in quat_yaw(yaw)]}


def rot_y(v, yaw):
    x, y, z = v
    c, s = math.cos(yaw), math.sin(yaw)
    return (c * x + s * z, y, -s * x + c * z)


def add(a, b):
    return tuple(p + q for p, q in zip(a, b))


def avatar(t, head, yaw, reach=None):
    """Keyframe with hands at rest, or the right hand at `reach`."""
    left = add(head, rot_y((-0.2, -0.45, -0.3), yaw))
    right = reach if reach is not None else add(head, rot_y((0.2, -0.45, -0.3), yaw))
    return {
        "t": t,
        "type": "set_avatar",
        "head": pose(head, yaw),
        "left_hand": pose(left, yaw),
        "right_hand": pose(right, yaw),
    }


def escape_room():
    wood, stone = (120, 84, 52), (150, 146, 138)
    objects = room(4.0, 4.0, 3.0, stone, (92, 80, 70))
    objects += [
        obj("door", "Locked door", (96, 60, 36), True, box((1.5, 1.05, -3.95), (0.5, 1.05, 0.04))),
        obj("table", "Potion table", wood, True, box((0.0, 0.45, -1.5), (0.8, 0.45, 0.45))),
        obj("wand", "Wand", (230, 220, 180), True, box((0.3, 0.921, -1.4), (0.15, 0.02, 0.02))),
        obj("cauldron", "Cauldron", (40, 40, 44), True, prism((-1.8, 0.001, -2.2), 0.45, 0.7)),
        obj("ingredient_newt", "Jar of newt eyes", (90, 160, 70), True, prism((-0.4, 0.901, -1.6), 0.08, 0.22, 8)),
        obj("ingredient_root", "Mandrake root", (170, 120, 200), True, prism((-0.15, 0.901, -1.65), 0.07, 0.18, 8)),
        obj("bookshelf", "Bookshelf", wood, True, box((3.6, 1.0, -1.0), (0.3, 1.0, 0.8))),
        obj("chest", "Treasure chest", (160, 110, 40), True, box((-3.2, 0.3, 1.5), (0.5, 0.3, 0.35))),
        obj("rune_stone", "Rune stone", (110, 140, 170), True, box((2.5, 0.4, 2.0), (0.3, 0.4, 0.3))),
    ]
    spawn = (0.0, 1.6, 0.5)
    return {"spawn": pose(spawn), "objects": objects}


def medical_room():
    objects = room(3.5, 3.0, 2.8, (210, 220, 225), (170, 175, 170))
    objects += [
        obj("door", "Door", (140, 150, 160), True, box((-2.5, 1.05, -2.95), (0.45, 1.05, 0.04))),
        obj("exam_bed", "Examination bed", (70, 120, 160), True, box((0.0, 0.4, -1.6), (1.0, 0.4, 0.4))),
        obj("bp_cuff", "Blood pressure cuff", (30, 30, 120), True, box((2.0, 1.06, -2.2), (0.12, 0.04, 0.08))),
        obj("stethoscope", "Stethoscope", (20, 20, 20), True, box((-0.5, 0.821, -1.5), (0.1, 0.02, 0.06))),
        obj("cabinet", "Supply cabinet", (200, 200, 190), True, box((2.0, 0.5, -2.2), (0.5, 0.5, 0.3))),
        obj("monitor", "Vital signs monitor", (50, 60, 60), True, box((-1.6, 1.3, -2.6), (0.3, 0.2, 0.1))),
        obj("sink", "Sink", (220, 225, 230), True, box((3.1, 0.45, 0.5), (0.3, 0.45, 0.4))),
        obj("chair", "Chair", (120, 70, 70), True, box((-2.2, 0.25, 0.8), (0.25, 0.25, 0.25))),
    ]
    return {"spawn": pose((0.0, 1.6, 0.8)), "objects": objects}


def free_camera_start(spawn):
    # Behind and above the spawn head, as placed by the session.
    return add(spawn, (0.0, 0.6, 3.0))


def task_a(scene):
    """Escape room: brew a potion, then grab the main camera to show the door."""
    spawn = tuple(scene["spawn"]["pos"])
    cam = free_camera_start(spawn)
    ev = []
    ev.append(avatar(0.0, spawn, 0.0))
    ev.append({"t": 1.0, "type": "speak", "text": "Okay, where do we start?", "duration": 2.0})
    ev.append(avatar(4.0, (0.0, 1.6, -0.7), 0.0))
    ev.append(avatar(6.0, (0.2, 1.55, -0.8), -0.2, reach=(0.3, 0.95, -1.4)))
    ev.append({"t": 6.5, "type": "touch_object", "object_id": "wand"})
    ev.append({"t": 7.0, "type": "speak", "text": "Got the wand.", "duration": 1.5})
    ev.append(avatar(10.0, (-1.0, 1.6, -1.0), 0.9))
    ev.append(avatar(12.0, (-1.2, 1.5, -1.5), 0.8, reach=(-1.6, 0.85, -2.0)))
    ev.append({"t": 12.5, "type": "touch_object", "object_id": "cauldron"})
    ev.append({"t": 14.0, "type": "touch_object", "object_id": "ingredient_newt"})
    ev.append({"t": 15.0, "type": "speak", "text": "Which ingredient goes in next?", "duration": 2.5})
    ev.append(avatar(17.0, (-0.4, 1.6, -0.8), 0.3))
    ev.append({"t": 18.0, "type": "touch_object", "object_id": "ingredient_root"})
    # Walk back and turn towards the main camera.
    stand = add(cam, (0.0, -0.6, -0.7))
    ev.append(avatar(24.0, stand, math.pi))
    ev.append(avatar(26.0, stand, math.pi, reach=add(cam, (0.05, -0.05, 0.0))))
    ev.append({"t": 26.5, "type": "grab_main_camera"})
    hand = add(cam, (0.05, -0.05, 0.0))
    for i, t in enumerate((27.0, 28.0, 29.0, 30.0)):
        hand = add(hand, (0.15, 0.0, -0.4))
        ev.append({"t": t, "type": "move_grabbed_camera", "pose": pose(hand, math.pi + 0.1 * (i + 1))})
    ev.append({"t": 30.5, "type": "release_main_camera"})
    ev.append(avatar(31.0, stand, math.pi, reach=add(cam, (0.05, -0.05, 0.0))))
    ev.append({"t": 31.5, "type": "speak", "text": "Can you see the door from there?", "duration": 2.0})
    ev.append(avatar(36.0, (1.4, 1.6, -2.8), 0.0))
    ev.append({"t": 37.0, "type": "touch_object", "object_id": "door"})
    ev.append(avatar(44.0, (1.2, 1.6, -2.4), -0.5))
    ev.append({"t": 45.0, "type": "speak", "text": "The rune stone might be the key.", "duration": 2.0})
    ev.append(avatar(52.0, (2.2, 1.6, 1.2), math.pi - 0.3))
    ev.append({"t": 53.0, "type": "touch_object", "object_id": "rune_stone"})
    ev.append(avatar(60.0, (0.0, 1.6, 0.0), 0.0))
    return ev


def task_b(scene):
    """Medical room: walk a visitor through the examination setup."""
    spawn = tuple(scene["spawn"]["pos"])
    ev = [avatar(0.0, spawn, 0.0)]
    ev.append({"t": 1.0, "type": "speak", "text": "Welcome to the examination room.", "duration": 2.5})
    ev.append(avatar(5.0, (0.0, 1.6, -0.6), 0.0))
    ev.append(avatar(7.0, (-0.4, 1.5, -0.9), 0.2, reach=(-0.5, 0.85, -1.5)))
    ev.append({"t": 7.5, "type": "touch_object", "object_id": "stethoscope"})
    ev.append(avatar(12.0, (1.6, 1.6, -1.2), -0.6))
    ev.append(avatar(14.0, (1.8, 1.55, -1.5), -0.3, reach=(2.0, 1.1, -2.2)))
    ev.append({"t": 14.5, "type": "touch_object", "object_id": "bp_cuff"})
    ev.append({"t": 15.0, "type": "speak", "text": "The cuff goes on the upper arm.", "duration": 2.0})
    ev.append(avatar(20.0, (-1.2, 1.6, -1.8), 0.7))
    ev.append({"t": 21.0, "type": "touch_object", "object_id": "monitor"})
    ev.append(avatar(28.0, (2.5, 1.6, 0.4), -math.pi / 2))
    ev.append({"t": 29.0, "type": "touch_object", "object_id": "sink"})
    ev.append({"t": 30.0, "type": "speak", "text": "Always wash your hands first.", "duration": 2.0})
    ev.append(avatar(40.0, (0.0, 1.6, 0.8), 0.0))
    return ev


def session_token(seed, counter):
    return hashlib.sha256(seed.encode() + counter.to_bytes(8, "big")).hexdigest()[:32]


def demo_session_log():
    """A co-hosted run over task A: joins, negotiation, chat and every tool."""
    vr = session_token("streamfunnel", 0)
    co = session_token("streamfunnel", 1)
    log = []

    def tick(n, dt=100):
        for _ in range(n):
            log.append({"kind": "tick", "dt_ms": dt})

    def cmd(name, params=None):
        entry = {"kind": "command", "token": co, "cmd": name}
        if params is not None:
            entry["params"] = params
        log.append(entry)

    def signal(client, msg):
        log.append({"kind": "signal", "client_id": client, "msg": msg})

    def chat(client, text, token=None):
        log.append({"kind": "chat", "token": token, "client_id": client, "text": text})

    signal("unity", {"type": "join", "requested_role": "vr_host", "client_id": "unity"})
    signal("cohost", {"type": "join", "requested_role": "co_host", "client_id": "cohost"})
    signal("unity", {"type": "offer", "sdp_blob": "v=0 o=unity 1 IN IP4 127.0.0.1"})
    signal("cohost", {"type": "answer", "sdp_blob": "v=0 o=cohost 1 IN IP4 127.0.0.1"})
    signal("unity", {"type": "candidate", "blob": "candidate:1 1 udp 2122260223 127.0.0.1 50000 typ host"})
    tick(20)
    cmd("set_on_air", {"on_air": True})
    chat("viewer-17", "what is the wand for?")
    chat("viewer-4", "hi from the stream")
    tick(10)
    cmd("relay_chat", {"msg_id": 1})
    cmd("select_object", {"x": 320, "y": 200})
    cmd("switch_camera", {"mode": "over_shoulder"})
    cmd("set_arm", {"value": 3.5})
    tick(30)
    cmd("annotate_vr", {"polyline_px": [[250, 220], [300, 230], [350, 225], [400, 240]]})
    cmd("annotate_spec", {"polyline_px": [[100, 100], [140, 120]]})
    cmd("place_target", {"x": 320, "y": 260})
    tick(25)
    chat("cohost", "nice, try the cauldron next", token=co)
    cmd("send_private_text", {"text": "Spectators are asking about the wand"})
    cmd("switch_camera", {"mode": "free"})
    cmd("free_cam_input", {"forward": 1.0, "right": 0.0, "up": 0.0, "yaw_delta": 0.2, "pitch_delta": -0.1, "dt": 0.5})
    tick(40)
    cmd("annotate_windowed", {"strokes_px": [[[40, 40], [120, 60], [200, 50]], [[300, 300], [340, 320]]]})
    cmd("remove_targets")
    cmd("switch_camera", {"mode": "third_follow"})
    tick(100)
    chat("viewer-9", "the rune stone!")
    cmd("relay_chat", {"msg_id": 4})
    cmd("remove_windowed")
    cmd("remove_all_annotations")
    tick(120)
    cmd("set_on_air", {"on_air": False})
    signal("unity", {"type": "bye"})
    log.append({"kind": "disconnect", "client_id": "cohost"})
    tick(10)
    return log


def write_scene(name, scene):
    with open(os.path.join(HERE, name), "w") as f:
        json.dump(scene, f, separators=(",", ":"))
        f.write("\n")


def write_script(name, events):
    with open(os.path.join(HERE, name), "w") as f:
        for e in events:
            f.write(json.dumps(e, separators=(",", ":")) + "\n")


def main():
    er = escape_room()
    med = medical_room()
    write_scene("escape_room.scene.json", er)
    write_scene("medical_room.scene.json", med)
    write_script("task_a.scenario.jsonl", task_a(er))
    write_script("task_b.scenario.jsonl", task_b(med))
    write_script("demo_session.log.jsonl", demo_session_log())


if __name__ == "__main__":
    main()
