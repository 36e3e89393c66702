"""Websocket session server: live stepping, teleop recording, scene edits.

One connection owns one scene and one stepper; sessions share nothing, so a
UI bug can at worst corrupt its own episode. The browser never simulates:
every frame it renders came out of the same step function training uses.
"""

import asyncio
import json
import os

import numpy as np

from . import bc, perception, policies, proxy, scenes, sim
from .scene import SceneError, scene_signature, scene_to_dict
from . import scene as scene_mod

PROTOCOL_VERSION = 1
DEFAULT_PORT = 8391
BROADCAST_POINTS = 400  # per-frame cloud cap keeps messages ~20 KB


def _resolve_scene(spec):
    if os.path.sep in spec or spec.endswith(".json") or os.path.exists(spec):
        return scene_mod.load_scene(spec)
    return scenes.bundled_scene(spec)


def _err(code, message=""):
    frame = {"type": "error", "code": code}
    if message:
        frame["message"] = message
    return frame


class Session:
    """Sequential command loop over one scene; returns frames per message."""

    def __init__(self):
        self.base = None  # authored scene, the thing edits apply to
        self.domain = None
        self.domain_kind = "sim"
        self.proxy_cfg = None
        self.proxy_seed = 0
        self.state = None
        self.reward = 0.0
        self.done = False
        self.reset_seed = 0
        self.obs_cfg = None
        self.obs_rng = None
        self.exec_rng = None
        self.view_rng = np.random.default_rng(0)
        self.rec = None  # {"seed", "initial", "steps", "success", "path"}
        self.rec_count = 0

    def hello(self):
        return {"type": "hello", "protocol": PROTOCOL_VERSION,
                "scenes": list(scenes.BUNDLED)}

    def handle(self, raw):
        try:
            msg = json.loads(raw)
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            return [_err("bad_json", str(e).splitlines()[0])]
        if not isinstance(msg, dict) or not isinstance(msg.get("type"), str):
            return [_err("bad_json", "frame must be an object with a string 'type'")]
        handler = getattr(self, "on_" + msg["type"], None)
        if handler is None:
            return [_err("unknown_type", f"no such message type {msg['type']!r}")]
        try:
            return handler(msg)
        except SceneError as e:
            return [_err("edit", str(e))]
        except (sim.SimError, proxy.ProxyError, ValueError, KeyError, TypeError) as e:
            return [_err("bad_request", f"{type(e).__name__}: {e}")]

    # --- domain plumbing -----------------------------------------------------

    def _build_domain(self):
        if self.domain_kind == "proxy":
            self.domain = proxy.make_proxy(self.base, self.proxy_cfg, self.proxy_seed)
        else:
            self.domain = proxy.SimDomain(self.base)
        self.obs_cfg = perception.AugmentConfig.for_scene(self.domain.scene)

    def _reset(self, seed, attempt=0):
        ep_seed = bc.episode_seed(seed, attempt)
        reset_rng, self.obs_rng, self.exec_rng, _ = bc.episode_rngs(ep_seed)
        self.view_rng = np.random.default_rng((ep_seed, 0xB0ADCA57))
        self.state = self.domain.reset(reset_rng)
        self.reward = 0.0
        self.done = False

    def _require_scene(self):
        if self.state is None:
            raise ValueError("no scene loaded; send load_scene first")

    def _require_idle(self, what):
        if self.rec is not None:
            raise ValueError(f"{what} while recording; send record stop first")

    def state_frame(self):
        scn = self.domain.scene
        cloud = self.domain.render(scn, self.state, BROADCAST_POINTS, self.view_rng)
        return {
            "type": "state",
            "poses": {k: [round(c, 6) for c in v] for k, v in self.state.poses.items()},
            "joints": {k: round(v, 6) for k, v in self.state.joints.items()},
            "ee": [round(c, 6) for c in self.state.ee],
            "gripper": "open" if self.state.gripper_open else "closed",
            "attached": None if self.state.attached is None else self.state.attached[0],
            "t": self.state.t,
            "reward": self.reward,
            "done": self.done,
            "recording": self.rec is not None,
            "pointcloud": np.asarray(cloud, dtype=np.float64).round(4).tolist(),
        }

    def scene_frame(self):
        return {"type": "scene", "name": self.base.name, "domain": self.domain_kind,
                "scene": scene_to_dict(self.domain.scene)}

    # --- message handlers ----------------------------------------------------

    def on_load_scene(self, msg):
        self._require_idle("load_scene")
        spec = msg.get("scene")
        if not isinstance(spec, str):
            raise ValueError("load_scene needs a scene name or path")
        self.base = _resolve_scene(spec)
        self.reset_seed = int(msg.get("seed", 0))
        self._build_domain()
        self._reset(self.reset_seed)
        return [{"type": "ack", "op": "load_scene", "scene": self.base.name},
                self.scene_frame(), self.state_frame()]

    def on_reset(self, msg):
        self._require_scene()
        self._require_idle("reset")
        self.reset_seed = int(msg.get("seed", self.reset_seed))
        self._reset(self.reset_seed)
        return [{"type": "ack", "op": "reset", "seed": self.reset_seed},
                self.state_frame()]

    def on_action(self, msg):
        self._require_scene()
        name = msg.get("name")
        if name not in sim.ACTIONS:
            return [_err("bad_action", f"unknown action {name!r}")]
        if self.rec is not None and self.done:
            return [_err("episode_done",
                         "episode finished; stop recording or reset")]
        action = sim.ACTIONS.index(name)
        scn = self.domain.scene
        if self.rec is not None:
            # pre-step observation, exactly what scripted collection records
            cloud = self.domain.render(scn, self.state, self.obs_cfg.scene_points,
                                       self.obs_rng).astype(np.float32)
            priv = (policies.state_encode(scn, self.state)
                    if self.domain_kind == "sim" else None)
            self.rec["steps"].append(bc.DemoStep(
                cloud=cloud, robot=perception.robot_state_vec(self.state),
                priv=priv, action=action))
        self.state, self.reward, self.done = self.domain.step(
            scn, self.state, action, self.exec_rng)
        if self.rec is not None and self.reward > 0:
            self.rec["success"] = True
        return [self.state_frame()]

    def on_record(self, msg):
        self._require_scene()
        op = msg.get("op")
        if op == "start":
            if self.rec is not None:
                return [_err("bad_record", "already recording")]
            if self.done:
                return [_err("bad_record", "episode finished; reset before recording")]
            # fresh streams from the stored seed make the file self-replaying
            rec_seed = bc.episode_seed(self.reset_seed, 1 + self.rec_count)
            self.rec_count += 1
            _, self.obs_rng, self.exec_rng, _ = bc.episode_rngs(rec_seed)
            self.rec = {"seed": rec_seed, "initial": sim.state_to_dict(self.state),
                        "steps": [], "success": False,
                        "path": msg.get("path")}
            return [{"type": "ack", "op": "record", "recording": True}]
        if op == "stop":
            if self.rec is None:
                return [_err("bad_record", "not recording")]
            path = msg.get("path") or self.rec["path"]
            if not path:
                self.rec = None
                return [_err("bad_record", "no output path given")]
            demo = bc.Demo(scene_name=self.base.name,
                           scene_sig=scene_signature(self.base),
                           domain=self.domain_kind, seed=self.rec["seed"],
                           success=self.rec["success"],
                           initial=self.rec["initial"], steps=self.rec["steps"])
            bc.save_demo(path, demo)
            n = len(self.rec["steps"])
            self.rec = None
            return [{"type": "ack", "op": "record", "recording": False,
                     "path": path, "steps": n, "success": demo.success}]
        return [_err("bad_record", f"record op must be start or stop, got {op!r}")]

    def on_edit_cut(self, msg):
        self._require_scene()
        self._require_idle("edit_cut")
        body = msg.get("body")
        seg = msg.get("segment")
        if (not isinstance(seg, (list, tuple)) or len(seg) != 2
                or any(len(p) != 2 for p in seg)):
            raise ValueError("segment must be [[x0, y0], [x1, y1]]")
        self.base = scene_mod.cut_body(self.base, body, tuple(seg[0]), tuple(seg[1]))
        self._build_domain()
        self._reset(self.reset_seed)
        return [{"type": "ack", "op": "edit_cut", "body": body},
                self.scene_frame(), self.state_frame()]

    def on_edit_add_joint(self, msg):
        self._require_scene()
        self._require_idle("edit_add_joint")
        joint = msg.get("joint")
        if not isinstance(joint, dict):
            raise ValueError("edit_add_joint needs a 'joint' object")
        self.base = scene_mod.add_joint(self.base, joint)
        self._build_domain()
        self._reset(self.reset_seed)
        return [{"type": "ack", "op": "edit_add_joint", "joint": joint.get("id")},
                self.scene_frame(), self.state_frame()]

    def on_set_domain(self, msg):
        self._require_scene()
        self._require_idle("set_domain")
        kind = msg.get("domain")
        if kind not in ("sim", "proxy"):
            return [_err("bad_domain", f"domain must be sim or proxy, got {kind!r}")]
        self.domain_kind = kind
        if kind == "proxy":
            cfg = msg.get("config")
            self.proxy_cfg = proxy.ProxyConfig.from_dict(cfg) if cfg else proxy.ProxyConfig()
            self.proxy_seed = int(msg.get("seed", 0))
        self._build_domain()
        self._reset(self.reset_seed)
        return [{"type": "ack", "op": "set_domain", "domain": kind},
                self.scene_frame(), self.state_frame()]


async def handler(websocket):
    session = Session()
    await websocket.send(json.dumps(session.hello()))
    async for raw in websocket:
        for frame in session.handle(raw):
            await websocket.send(json.dumps(frame))


async def serve(port=DEFAULT_PORT):
    from websockets.asyncio.server import serve as ws_serve
    async with ws_serve(handler, "localhost", port) as server:
        print(f"listening on ws://localhost:{port} "
              f"(protocol {PROTOCOL_VERSION})", flush=True)
        await server.serve_forever()


def serve_forever(port=DEFAULT_PORT):
    try:
        asyncio.run(serve(port))
    except KeyboardInterrupt:
        pass
