from .cloud import GeometryError, PointCloud, normalize_cloud
from .distances import (GEODESIC_K, chamfer_distance, chamfer_loss, geodesic_distances,
                        geodesic_matrix, knn_graph)
from .lrf import (LRF_RADIUS, DegenerateLRFError, LocalReferenceFrame, estimate_lrf,
                  estimate_lrfs)
from .neighbors import radius_neighbors, radius_neighbors_all
from .nms import NMS_RADIUS, nms
from .ply import PlyError, read_ply, write_ply
from .rotation import random_rotation, rotate
from .sdv import GRID_SIZE, SdvDescriptor, compute_sdv, compute_sdv_all
from .symmetry import reflect, symmetric_pairs
