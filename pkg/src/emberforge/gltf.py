"""glTF 2.0 subset reader/writer (GLB and .gltf) for emission-capable assets.

Supported subset: single scene, one triangle mesh primitive, metallic-
roughness materials, embedded PNG textures, and the
KHR_materials_emissive_strength extension. Anything else is rejected
loudly rather than silently dropped.
"""

from __future__ import annotations

import base64
import io
import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .assets import Asset, MaterialSet, Mesh
from .errors import InvalidAsset, IoError, MalformedFile, MissingBuffer, UnsupportedFeature
from .textures import TextureMap, linear_to_srgb, srgb_to_linear

_GLB_MAGIC = 0x46546C67
_CHUNK_JSON = 0x4E4F534A
_CHUNK_BIN = 0x004E4942
_EXT_STRENGTH = "KHR_materials_emissive_strength"

_COMPONENT_DTYPES = {5121: np.uint8, 5123: np.uint16, 5125: np.uint32, 5126: np.float32}
_TYPE_WIDTH = {"SCALAR": 1, "VEC2": 2, "VEC3": 3, "VEC4": 4}

NO_MR_TAG = "missing_metallic_roughness"


# ---------------------------------------------------------------------------
# loading

def _parse_glb(raw: bytes):
    if len(raw) < 12:
        raise MalformedFile("file too short for GLB header")
    magic, version, length = struct.unpack("<III", raw[:12])
    if magic != _GLB_MAGIC:
        raise MalformedFile("bad GLB magic")
    if version != 2:
        raise UnsupportedFeature(f"GLB version {version}")
    pos, doc, bin_chunk = 12, None, None
    while pos + 8 <= min(length, len(raw)):
        clen, ctype = struct.unpack("<II", raw[pos:pos + 8])
        payload = raw[pos + 8:pos + 8 + clen]
        if len(payload) != clen:
            raise MalformedFile("truncated GLB chunk")
        if ctype == _CHUNK_JSON:
            doc = json.loads(payload)
        elif ctype == _CHUNK_BIN:
            bin_chunk = payload
        pos += 8 + clen + (-clen) % 4
    if doc is None:
        raise MalformedFile("GLB has no JSON chunk")
    return doc, bin_chunk


def _load_buffers(doc, bin_chunk, base_dir: Path):
    buffers = []
    for buf in doc.get("buffers", []):
        uri = buf.get("uri")
        if uri is None:
            if bin_chunk is None:
                raise MissingBuffer("buffer refers to missing BIN chunk")
            buffers.append(bin_chunk)
        elif uri.startswith("data:"):
            try:
                buffers.append(base64.b64decode(uri.split(",", 1)[1]))
            except Exception as exc:
                raise MalformedFile(f"bad data URI: {exc}") from exc
        else:
            path = base_dir / uri
            if not path.exists():
                raise MissingBuffer(f"external buffer {uri} not found")
            buffers.append(path.read_bytes())
    return buffers


def _buffer_view_bytes(doc, buffers, view_index: int) -> bytes:
    views = doc.get("bufferViews", [])
    if view_index >= len(views):
        raise MissingBuffer(f"bufferView {view_index} out of range")
    view = views[view_index]
    buf_index = view.get("buffer", 0)
    if buf_index >= len(buffers):
        raise MissingBuffer(f"buffer {buf_index} out of range")
    start = view.get("byteOffset", 0)
    return buffers[buf_index][start:start + view["byteLength"]], view


def _read_accessor(doc, buffers, index: int) -> np.ndarray:
    acc = doc["accessors"][index]
    if "sparse" in acc:
        raise UnsupportedFeature("sparse accessors")
    if "bufferView" not in acc:
        raise MissingBuffer(f"accessor {index} has no bufferView")
    dtype = _COMPONENT_DTYPES.get(acc["componentType"])
    if dtype is None:
        raise UnsupportedFeature(f"componentType {acc['componentType']}")
    width = _TYPE_WIDTH.get(acc["type"])
    if width is None:
        raise UnsupportedFeature(f"accessor type {acc['type']}")
    data, view = _buffer_view_bytes(doc, buffers, acc["bufferView"])
    elem_size = np.dtype(dtype).itemsize * width
    stride = view.get("byteStride", elem_size)
    if stride != elem_size:
        raise UnsupportedFeature("interleaved (strided) accessors")
    off = acc.get("byteOffset", 0)
    count = acc["count"]
    if len(data) < off + count * elem_size:
        raise MissingBuffer(f"accessor {index} overruns its buffer view")
    arr = np.frombuffer(data, dtype=np.dtype(dtype).newbyteorder("<"),
                        count=count * width, offset=off)
    return arr.reshape(count, width) if width > 1 else arr


def _decode_image(doc, buffers, image_index: int) -> np.ndarray:
    img = doc["images"][image_index]
    if "uri" in img:
        uri = img["uri"]
        if not uri.startswith("data:"):
            raise UnsupportedFeature("external image files")
        payload = base64.b64decode(uri.split(",", 1)[1])
    else:
        payload, _ = _buffer_view_bytes(doc, buffers, img["bufferView"])
        if img.get("mimeType") not in (None, "image/png"):
            raise UnsupportedFeature(f"image mimeType {img['mimeType']}")
    try:
        pil = Image.open(io.BytesIO(payload))
        pil.load()
    except Exception as exc:
        raise MalformedFile(f"undecodable embedded image: {exc}") from exc
    return np.asarray(pil.convert("RGB"), dtype=np.float64) / 255.0


def _texture_image(doc, buffers, tex_info) -> np.ndarray:
    if tex_info.get("texCoord", 0) != 0:
        raise UnsupportedFeature("TEXCOORD sets other than 0")
    tex = doc["textures"][tex_info["index"]]
    return _decode_image(doc, buffers, tex["source"])


def _reject_unsupported(doc):
    for key in ("animations", "skins"):
        if doc.get(key):
            raise UnsupportedFeature(key)
    if len(doc.get("scenes", [])) > 1:
        raise UnsupportedFeature("multiple scenes")
    for ext in doc.get("extensionsRequired", []):
        if ext != _EXT_STRENGTH:
            raise UnsupportedFeature(f"required extension {ext}")
    if len(doc.get("meshes", [])) != 1:
        raise UnsupportedFeature("expected exactly one mesh")
    prims = doc["meshes"][0].get("primitives", [])
    if len(prims) != 1:
        raise UnsupportedFeature("expected exactly one mesh primitive")
    if prims[0].get("mode", 4) != 4:
        raise UnsupportedFeature("non-triangle primitive mode")


def load_asset(path) -> Asset:
    """Load a GLB or .gltf file within the supported subset."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] == b"glTF":
        doc, bin_chunk = _parse_glb(raw)
    else:
        try:
            doc = json.loads(raw)
        except Exception as exc:
            raise MalformedFile(f"{path}: neither GLB nor JSON glTF: {exc}") from exc
        bin_chunk = None
    if not isinstance(doc, dict) or "asset" not in doc:
        raise MalformedFile(f"{path}: missing glTF asset header")
    _reject_unsupported(doc)
    buffers = _load_buffers(doc, bin_chunk, path.parent)

    prim = doc["meshes"][0]["primitives"][0]
    attrs = prim.get("attributes", {})
    for needed in ("POSITION", "NORMAL", "TEXCOORD_0"):
        if needed not in attrs:
            raise UnsupportedFeature(f"mesh primitive lacks {needed}")
    vertices = _read_accessor(doc, buffers, attrs["POSITION"]).astype(np.float32)
    normals = _read_accessor(doc, buffers, attrs["NORMAL"]).astype(np.float32)
    uvs = _read_accessor(doc, buffers, attrs["TEXCOORD_0"]).astype(np.float32)
    if "indices" not in prim:
        raise UnsupportedFeature("non-indexed triangles")
    indices = _read_accessor(doc, buffers, prim["indices"]).astype(np.uint32)
    if indices.size % 3:
        raise MalformedFile("index count not a multiple of 3")
    mesh = Mesh(vertices=vertices, normals=normals, uvs=uvs,
                triangles=indices.reshape(-1, 3))

    metadata = []
    mat = {}
    if "material" in prim:
        mat = doc.get("materials", [])[prim["material"]]
    pbr = mat.get("pbrMetallicRoughness", {})

    base_factor = np.array(pbr.get("baseColorFactor", [1, 1, 1, 1]), dtype=np.float64)[:3]
    if "baseColorTexture" in pbr:
        img = srgb_to_linear(_texture_image(doc, buffers, pbr["baseColorTexture"]))
        albedo = TextureMap.from_array(img * base_factor)
    else:
        albedo = TextureMap.constant(base_factor)

    if "metallicRoughnessTexture" in pbr:
        mr = _texture_image(doc, buffers, pbr["metallicRoughnessTexture"])
        roughness = TextureMap.from_array(mr[:, :, 1:2] * pbr.get("roughnessFactor", 1.0))
        metallic = TextureMap.from_array(mr[:, :, 2:3] * pbr.get("metallicFactor", 1.0))
    else:
        roughness = TextureMap.constant(pbr.get("roughnessFactor", 1.0), channels=1)
        metallic = TextureMap.constant(pbr.get("metallicFactor", 1.0), channels=1)
        if "roughnessFactor" not in pbr and "metallicFactor" not in pbr:
            metadata.append(NO_MR_TAG)

    emissive_factor = np.array(mat.get("emissiveFactor", [0, 0, 0]), dtype=np.float64)
    has_emissive_tex = "emissiveTexture" in mat
    if has_emissive_tex:
        img = srgb_to_linear(_texture_image(doc, buffers, mat["emissiveTexture"]))
        factor = emissive_factor if "emissiveFactor" in mat else np.ones(3)
        emission = TextureMap.from_array(np.clip(img * factor, 0.0, 1.0))
    else:
        emission = TextureMap.constant(np.clip(emissive_factor, 0.0, 1.0))

    ext = mat.get("extensions", {}).get(_EXT_STRENGTH)
    if ext is not None:
        strength = float(ext.get("emissiveStrength", 1.0))
    elif has_emissive_tex or emissive_factor.max() > 0:
        strength = 1.0
    else:
        strength = 0.0

    materials = MaterialSet(albedo=albedo, metallic=metallic, roughness=roughness,
                            emission=emission, emission_strength=strength)
    mesh_node = next((n for n in doc.get("nodes", []) if "mesh" in n), {})
    asset_id = mesh_node.get("name") or path.stem
    extras = mat.get("extras", {})
    metadata.extend(extras.get("tags", []))
    return Asset(id=asset_id, mesh=mesh, materials=materials, metadata=tuple(metadata))


# ---------------------------------------------------------------------------
# saving

def _png_bytes(arr_u8: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr_u8).save(buf, format="PNG")
    return buf.getvalue()


class _BinBuilder:
    def __init__(self):
        self.blob = b""
        self.views = []

    def add(self, data: bytes) -> int:
        self.blob += b"\0" * ((-len(self.blob)) % 4)
        self.views.append({"buffer": 0, "byteOffset": len(self.blob), "byteLength": len(data)})
        self.blob += data
        return len(self.views) - 1


def save_asset(asset: Asset, path) -> None:
    """Write the asset as a GLB with embedded PNG textures."""
    if asset.mesh.triangle_count == 0:
        raise InvalidAsset("asset has no triangles")
    mesh, mats = asset.mesh, asset.materials

    bin_b = _BinBuilder()
    doc = {
        "asset": {"version": "2.0", "generator": "emberforge"},
        "scene": 0,
        "scenes": [{"nodes": [0]}],
        "nodes": [{"mesh": 0, "name": asset.id}],
        "accessors": [],
        "meshes": [],
        "buffers": [],
        "bufferViews": bin_b.views,
        "samplers": [{"magFilter": 9729, "minFilter": 9729, "wrapS": 10497, "wrapT": 10497}],
        "textures": [],
        "images": [],
    }

    def add_accessor(arr, acc_type, component):
        view = bin_b.add(np.ascontiguousarray(arr).tobytes())
        acc = {"bufferView": view, "componentType": component,
               "count": int(arr.shape[0]), "type": acc_type}
        if acc_type == "VEC3":
            a64 = np.asarray(arr, dtype=np.float64)
            acc["min"] = [float(x) for x in a64.min(axis=0)]
            acc["max"] = [float(x) for x in a64.max(axis=0)]
        doc["accessors"].append(acc)
        return len(doc["accessors"]) - 1

    pos_acc = add_accessor(mesh.vertices, "VEC3", 5126)
    norm_acc = add_accessor(mesh.normals, "VEC3", 5126)
    uv_acc = add_accessor(mesh.uvs, "VEC2", 5126)
    idx_acc = add_accessor(mesh.triangles.reshape(-1, 1), "SCALAR", 5125)
    doc["accessors"][idx_acc]["count"] = int(mesh.triangles.size)

    def add_texture(img_u8) -> int:
        view = bin_b.add(_png_bytes(img_u8))
        doc["images"].append({"bufferView": view, "mimeType": "image/png"})
        doc["textures"].append({"sampler": 0, "source": len(doc["images"]) - 1})
        return len(doc["textures"]) - 1

    pbr = {"metallicFactor": 1.0, "roughnessFactor": 1.0}
    material = {"pbrMetallicRoughness": pbr, "name": f"{asset.id}_material"}

    if mats.albedo.is_constant:
        pbr["baseColorFactor"] = [float(x) for x in mats.albedo.data[0, 0]] + [1.0]
    else:
        srgb = np.rint(linear_to_srgb(mats.albedo.data) * 255).astype(np.uint8)
        pbr["baseColorTexture"] = {"index": add_texture(srgb)}

    if mats.metallic.is_constant and mats.roughness.is_constant:
        pbr["metallicFactor"] = float(mats.metallic.data[0, 0, 0])
        pbr["roughnessFactor"] = float(mats.roughness.data[0, 0, 0])
    else:
        w = max(mats.metallic.width, mats.roughness.width)
        h = max(mats.metallic.height, mats.roughness.height)
        mr = np.zeros((h, w, 3))
        mr[:, :, 1] = mats.roughness.resized_nearest(w, h).data[:, :, 0]
        mr[:, :, 2] = mats.metallic.resized_nearest(w, h).data[:, :, 0]
        pbr["metallicRoughnessTexture"] = {
            "index": add_texture(np.rint(mr * 255).astype(np.uint8))
        }

    has_emission = mats.emission.data.max() > 0 or mats.emission_strength > 0
    if has_emission:
        material["emissiveFactor"] = [1.0, 1.0, 1.0]
        if mats.emission.is_constant:
            material["emissiveFactor"] = [float(x) for x in mats.emission.data[0, 0]]
        else:
            srgb = np.rint(linear_to_srgb(mats.emission.data) * 255).astype(np.uint8)
            material["emissiveTexture"] = {"index": add_texture(srgb)}
        material["extensions"] = {
            _EXT_STRENGTH: {"emissiveStrength": float(mats.emission_strength)}
        }
        doc["extensionsUsed"] = [_EXT_STRENGTH]

    if asset.metadata:
        material["extras"] = {"tags": [t for t in asset.metadata if t != NO_MR_TAG]}

    doc["materials"] = [material]
    doc["meshes"] = [{
        "primitives": [{
            "attributes": {"POSITION": pos_acc, "NORMAL": norm_acc, "TEXCOORD_0": uv_acc},
            "indices": idx_acc,
            "material": 0,
            "mode": 4,
        }]
    }]
    doc["buffers"] = [{"byteLength": len(bin_b.blob)}]

    json_payload = json.dumps(doc, separators=(",", ":"), sort_keys=True).encode()
    json_payload += b" " * ((-len(json_payload)) % 4)
    bin_payload = bin_b.blob + b"\0" * ((-len(bin_b.blob)) % 4)

    total = 12 + 8 + len(json_payload) + 8 + len(bin_payload)
    try:
        with open(path, "wb") as fh:
            fh.write(struct.pack("<III", _GLB_MAGIC, 2, total))
            fh.write(struct.pack("<II", len(json_payload), _CHUNK_JSON))
            fh.write(json_payload)
            fh.write(struct.pack("<II", len(bin_payload), _CHUNK_BIN))
            fh.write(bin_payload)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
