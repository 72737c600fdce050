import numpy as np
import pytest

from emberforge.assets import Asset, MaterialSet, Mesh
from emberforge.errors import InvalidAsset
from emberforge.fixtures import quad_mesh, sphere_mesh
from emberforge.textures import TextureMap


def _mats(**kw):
    defaults = dict(albedo=TextureMap.constant([0.5] * 3),
                    metallic=TextureMap.constant(0.0, channels=1),
                    roughness=TextureMap.constant(1.0, channels=1),
                    emission=TextureMap.constant([0.0] * 3),
                    emission_strength=0.0)
    defaults.update(kw)
    return MaterialSet(**defaults)


class TestMesh:
    def test_quad_counts(self):
        mesh = quad_mesh()
        assert mesh.vertex_count == 4
        assert mesh.triangle_count == 2

    def test_index_out_of_range(self):
        with pytest.raises(InvalidAsset):
            Mesh(vertices=np.zeros((3, 3)), normals=np.tile([0, 0, 1.0], (3, 1)),
                 uvs=np.zeros((3, 2)), triangles=np.array([[0, 1, 3]]))

    def test_non_unit_normals_rejected(self):
        with pytest.raises(InvalidAsset):
            Mesh(vertices=np.zeros((3, 3)), normals=np.full((3, 3), 2.0),
                 uvs=np.zeros((3, 2)), triangles=np.array([[0, 1, 2]]))

    def test_bounding_radius(self):
        mesh = sphere_mesh(radius=2.0)
        assert mesh.bounding_radius() == pytest.approx(2.0, rel=1e-5)

    def test_arrays_immutable(self):
        mesh = quad_mesh()
        with pytest.raises(ValueError):
            mesh.vertices[0, 0] = 9.0


class TestMaterialSet:
    def test_emission_range_enforced(self):
        with pytest.raises(InvalidAsset):
            _mats(emission=TextureMap.constant([1.5] * 3))

    def test_negative_strength_rejected(self):
        with pytest.raises(InvalidAsset):
            _mats(emission_strength=-1.0)


class TestAsset:
    def test_id_must_be_filesystem_safe(self):
        with pytest.raises(InvalidAsset):
            Asset(id="bad/id", mesh=quad_mesh(), materials=_mats())

    def test_empty_id_rejected(self):
        with pytest.raises(InvalidAsset):
            Asset(id="", mesh=quad_mesh(), materials=_mats())

    def test_metadata_tuple(self):
        a = Asset(id="ok", mesh=quad_mesh(), materials=_mats(),
                  metadata=["tag_a"])
        assert a.metadata == ("tag_a",)
